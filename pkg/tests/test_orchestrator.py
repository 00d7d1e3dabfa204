import math

import numpy as np
import pytest

from fedvrdp.aggregators import aggregate
from conftest import small_config
from fedvrdp.data import synthetic
from fedvrdp.errors import ConfigurationError, ProtocolError
from fedvrdp.model import Dataset
from fedvrdp.orchestrator import Federation, load_data, run_experiment, sample_clients
from reference_fedavg import fedavg


def test_sample_clients():
    assert sample_clients(6, 6, 3, 0) == list(range(6))
    assert sample_clients(50, 7, 11, 2) == sample_clients(50, 7, 11, 2)
    assert sample_clients(50, 7, 11, 2) != sample_clients(50, 7, 12, 2)
    with pytest.raises(ProtocolError):
        sample_clients(3, 4, 0, 0)


def test_inclusion_frequency():
    n, s, rounds = 10, 3, 10**5
    counts = np.zeros(n)
    for t in range(rounds):
        counts[sample_clients(n, s, t, 8)] += 1
    p = s / n
    assert np.all(np.abs(counts - rounds * p) <= 3 * math.sqrt(rounds * p * (1 - p)))


def test_matches_reference_fedavg():
    cfg = small_config(T=10)
    train, test = load_data(cfg)
    _, history = Federation(cfg, train, test).run()
    fed = Federation(cfg, train, test)
    state = fed.initial_state()
    for want in fedavg(cfg, train, 10):
        result = fed.run_round(state)
        assert result.x.tobytes() == want.tobytes()
        state = type(state)(result.x, result.mask, state.round + 1)


def test_single_client_round_applies_its_update():
    cfg = small_config(s=1, **{"dp.clip": 0.5, "dp.sigma": 0.3, "dp.p": 0.5})
    fed = Federation(cfg)
    state = fed.initial_state()
    result = fed.run_round(state)
    (update,) = result.updates
    np.testing.assert_array_equal(result.x, state.x - update.dense())


def test_identical_clients_agree_under_every_rule():
    point = Dataset(np.array([[0.3, -1.0, 0.5, 2.0]]), np.array([1]), 3)
    _, test = synthetic(3, 4, 10, 30, 1.0, 0)
    cfg = small_config(n=7, s=7, **{"trainer.batch_size": 1})
    fed = Federation(cfg, point, test, [point] * 7)
    state = fed.initial_state()
    updates = fed.submissions(state.x, state.mask, fed.raw_updates(state.x, list(range(7)), 0), 0)
    dense = np.stack([u.dense() for u in updates])
    assert all(np.array_equal(row, dense[0]) for row in dense)
    for rule in ("mean", "median", "krum", "bulyan", "trimmed_mean"):
        np.testing.assert_allclose(aggregate(rule, dense, 1), dense[0], rtol=1e-14)


def test_zero_byzantine_equals_no_attack():
    plain = small_config(T=4, **{"dp.clip": 1.0, "dp.sigma": 0.2, "dp.p": 0.5})
    attacked = plain.replace(**{"attack.kind": "agr", "byz_fraction": 0.0})
    a, b = Federation(plain), Federation(attacked)
    sa, sb = a.initial_state(), b.initial_state()
    for _ in range(4):
        ra, rb = a.run_round(sa), b.run_round(sb)
        for ua, ub in zip(ra.updates, rb.updates):
            assert ua.values.tobytes() == ub.values.tobytes()
        sa = type(sa)(ra.x, ra.mask, sa.round + 1)
        sb = type(sb)(rb.x, rb.mask, sb.round + 1)


def test_off_mask_coordinates_are_zero_in_every_round():
    cfg = small_config(T=20, byz_fraction=0.2, **{
        "dp.clip": 0.5, "dp.sigma": 1.0, "dp.p": 0.3, "attack.kind": "agr", "attack.perturbation": "neg_sign",
    })
    fed = Federation(cfg)
    state = fed.initial_state()
    for _ in range(cfg.T):
        result = fed.run_round(state)
        for u in result.updates:
            dense = u.dense()
            off = np.setdiff1d(np.arange(fed.d), state.mask.indices)
            assert np.all(dense[off] == 0.0) and u.mask == state.mask
            assert np.linalg.norm(u.values) <= 0.5 + 1e-9 or not fed.clients[u.client_id].is_byzantine
        state = type(state)(result.x, result.mask, state.round + 1)


def test_byzantine_submissions_are_clipped():
    cfg = small_config(byz_fraction=0.4, **{"dp.clip": 0.3, "attack.kind": "fang"})
    fed = Federation(cfg)
    state = fed.initial_state()
    ids = list(range(cfg.n))
    updates = fed.submissions(state.x, state.mask, fed.raw_updates(state.x, ids, 0), 0)
    byz = [u for u in updates if fed.clients[u.client_id].is_byzantine]
    assert len(byz) == 4
    assert all(np.linalg.norm(u.values) <= 0.3 + 1e-12 for u in updates)


def test_zero_rounds():
    cfg = small_config(T=0)
    fed = Federation(cfg)
    x, history = fed.run()
    assert history == []
    np.testing.assert_array_equal(x, fed.initial_state().x)


def test_epsilon_column():
    _, noisy = run_experiment(small_config(T=5, **{"dp.clip": 1.0, "dp.sigma": 2.0}))
    eps = [m.eps_theorem1 for m in noisy]
    assert all(b >= a for a, b in zip(eps, eps[1:])) and math.isfinite(eps[-1])
    _, clean = run_experiment(small_config(T=2))
    assert all(m.eps_theorem1 == math.inf for m in clean)


def test_thread_pool_gives_identical_results():
    cfg = small_config(T=4, **{"dp.clip": 1.0, "dp.sigma": 0.5, "dp.p": 0.5, "trainer.kappa": 0.5})
    x1, h1 = run_experiment(cfg)
    x2, h2 = run_experiment(cfg.replace(workers=4))
    assert x1.tobytes() == x2.tobytes()
    assert [m.test_loss for m in h1] == [m.test_loss for m in h2]


def test_easy_two_blob_task():
    cfg = small_config(T=30, n=20, s=5, **{
        "dataset.num_classes": 2, "dataset.dim": 10, "dataset.separation": 1.0,
        "dataset.train_size": 400, "dataset.test_size": 400,
    })
    _, history = run_experiment(cfg)
    assert history[-1].test_accuracy >= 0.95


def test_runtime_admissibility_is_enforced():
    cfg = small_config(n=10, s=5, **{"aggregator.rule": "krum", "aggregator.f": 1})
    fed = Federation(cfg)
    state = fed.initial_state()
    raw = fed.raw_updates(state.x, [0, 1, 2, 3], 0)
    with pytest.raises(ProtocolError, match="krum"):
        fed.aggregate(fed.submissions(state.x, state.mask, raw, 0))


def test_shard_count_must_match():
    cfg = small_config()
    train, test = load_data(cfg)
    with pytest.raises(ProtocolError):
        Federation(cfg, train, test, [train])


def test_robust_rule_needs_admissible_f():
    with pytest.raises(ConfigurationError, match="aggregator.f"):
        small_config(**{"aggregator.rule": "bulyan", "aggregator.f": 2})
