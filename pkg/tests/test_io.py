import numpy as np
import pytest

from fedvrdp.errors import IngestionError
from fedvrdp.io import METRICS_HEADER, MetricsWriter, format_float, load_model, metrics_row, save_model
from fedvrdp.orchestrator import RoundMetrics


def test_model_blob_round_trip(tmp_path):
    x = np.random.default_rng(0).standard_normal(37)
    save_model(tmp_path / "m.bin", x)
    raw = (tmp_path / "m.bin").read_bytes()
    assert raw[:4] == b"FVRD" and len(raw) == 16 + 8 * 37
    assert load_model(tmp_path / "m.bin").tobytes() == x.tobytes()


def test_model_blob_errors(tmp_path):
    path = tmp_path / "m.bin"
    save_model(path, np.ones(3))
    raw = path.read_bytes()
    for broken, offset in [(b"XXXX" + raw[4:], 0), (raw[:4] + b"\x02" + raw[5:], 4), (raw[:-1], 16), (raw[:10], 10)]:
        path.write_bytes(broken)
        with pytest.raises(IngestionError) as info:
            load_model(path)
        assert info.value.offset == offset


def test_format_float():
    assert format_float(None) == ""
    assert format_float(float("inf")) == "inf"
    assert float(format_float(0.1 + 0.2)) == 0.1 + 0.2


def test_metrics_rows(tmp_path):
    m = RoundMetrics(3, 0.5, 1.25, float("inf"), 0.1, (1.0, 2.0, 3.0, 4.0), 0.0123)
    assert metrics_row(m) == ["3", "0.5", "1.25", "inf", "0.1", "1.0", "2.0", "3.0", "4.0", ""]
    assert metrics_row(m, record_wall_time=True)[-1] == repr(12.3)
    with MetricsWriter(tmp_path / "m.csv") as writer:
        writer.write(RoundMetrics(1, 1.0, 0.0, 2.0))
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines == [",".join(METRICS_HEADER), "1,1.0,0.0,2.0,,,,,,"]
