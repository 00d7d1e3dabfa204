"""The federated round loop.

Each round the server samples ``s`` clients, broadcasts the global model and
the current top-k mask, collects one :class:`SparseUpdate` per sampled client,
aggregates them and regenerates the mask from the new global model.

Benign clients run momentum SGD and the sparse DP mechanism. Byzantine
clients first train honestly on their own shards, then replace their updates
with a coordinated attack; crafted updates are masked and clipped like any
other submission.

Randomness is keyed by ``(seed, purpose, round, client_id)`` and updates are
always combined in ascending client id, so running clients on a thread pool
does not change any result.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import aggregators
from .accountant import PrivacyParams, ledger_or_inf
from .attacks import AttackerView, craft
from .config import ExperimentConfig
from .diagnostic import variance_diagnostic
from .data import holdout_split, load_csv, load_idx, partition_data, synthetic
from .errors import ProtocolError, TrainingDivergedError
from .model import Dataset, ModelSpec, evaluate, init_params
from .rng import Purpose, stream
from .sparse_dp import Mask, SparseUpdate, apply_mask, clip, generate_mask, initial_mask, perturb, privatize
from .trainer import local_update

log = logging.getLogger(__name__)


@dataclass
class ClientRecord:
    client_id: int
    shard: Dataset
    is_byzantine: bool = False


@dataclass
class RoundMetrics:
    round: int
    test_accuracy: float
    test_loss: float
    eps_theorem1: float
    lhs_discrepancy: float | None = None
    rhs_bound_terms: tuple | None = None
    wall_time: float | None = None


@dataclass
class ServerState:
    x: np.ndarray
    mask: Mask
    round: int = 0


@dataclass
class RoundResult:
    x: np.ndarray
    mask: Mask
    metrics: RoundMetrics
    updates: list = field(default_factory=list)
    sampled: list = field(default_factory=list)


def sample_clients(n: int, s: int, round_index: int, seed: int) -> list[int]:
    """Uniform ``s``-subset of ``range(n)`` without replacement, ascending."""
    if not 1 <= s <= n:
        raise ProtocolError(f"cannot sample s={s} of n={n} clients")
    rng = stream(seed, Purpose.SAMPLING, round_index)
    return sorted(int(i) for i in rng.choice(n, size=s, replace=False))


def choose_byzantine(n: int, n_byzantine: int, seed: int) -> frozenset:
    """Fixed set of Byzantine client ids, drawn once per experiment."""
    rng = stream(seed, Purpose.BYZANTINE_IDS)
    return frozenset(int(i) for i in rng.choice(n, size=n_byzantine, replace=False))


def load_data(config: ExperimentConfig) -> tuple[Dataset, Dataset]:
    ds = config.dataset
    if ds.kind == "synthetic":
        return synthetic(ds.num_classes, ds.dim, ds.train_size, ds.test_size, ds.separation, config.seed)
    if ds.kind == "idx":
        train = load_idx(ds.train_images, ds.train_labels)
        if ds.test_images:
            test = load_idx(ds.test_images, ds.test_labels, train.num_classes)
            return train, test
        return holdout_split(train, ds.test_fraction, config.seed)
    train = load_csv(ds.train_csv, ds.label_column)
    if ds.test_csv:
        test = load_csv(ds.test_csv, ds.label_column, train.num_classes)
        return train, test
    return holdout_split(train, ds.test_fraction, config.seed)


class Federation:
    """Server plus client population for one experiment.

    Args:
        config: validated experiment configuration.
        train, test: datasets; loaded from ``config.dataset`` when omitted.
        shards: explicit client shards (length ``config.n``) instead of partitioning ``train``.
    """

    def __init__(self, config: ExperimentConfig, train=None, test=None, shards=None):
        self.config = config
        if train is None or test is None:
            train, test = load_data(config)
        self.test = test
        if shards is None:
            shards = partition_data(
                train, config.n, config.partition.scheme, config.seed, config.partition.alpha
            )
        if len(shards) != config.n:
            raise ProtocolError(f"expected {config.n} shards, got {len(shards)}")
        num_classes = max(train.num_classes, test.num_classes)
        self.spec = ModelSpec(
            config.model.kind, train.input_dim, num_classes,
            config.model.hidden_dim if config.model.kind == "mlp1" else 0,
        )
        self.d = self.spec.dim
        self.k = config.dp.k_for(self.d)
        byz = choose_byzantine(config.n, config.n_byzantine, config.seed)
        self.clients = [ClientRecord(i, shard, i in byz) for i, shard in enumerate(shards)]
        self.privacy = PrivacyParams(config.dp.sigma, config.dp.delta, config.s / config.n, config.T)

    @property
    def byzantine_ids(self) -> list[int]:
        return [c.client_id for c in self.clients if c.is_byzantine]

    def initial_state(self) -> ServerState:
        x0 = init_params(self.spec, self.config.seed, self.config.model.init_scale)
        mask = initial_mask(self.d, self.k, stream(self.config.seed, Purpose.MASK_INIT))
        return ServerState(x0, mask, 0)

    # -- client side -----------------------------------------------------

    def _train(self, x, client_id, round_index, purpose=Purpose.TRAIN, rep=None):
        client = self.clients[client_id]
        cfg = self.config.trainer.for_round(round_index).resolve(len(client.shard))
        keys = (round_index, client_id) if rep is None else (round_index, rep, client_id)
        return local_update(self.spec, x, client.shard, cfg, stream(self.config.seed, purpose, *keys))

    def raw_updates(self, x, client_ids, round_index) -> dict:
        """Honest local updates for ``client_ids`` (possibly computed in parallel)."""
        if self.config.workers > 1 and len(client_ids) > 1:
            with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
                results = list(pool.map(lambda i: self._train(x, i, round_index), client_ids))
        else:
            results = [self._train(x, i, round_index) for i in client_ids]
        return dict(zip(client_ids, results))

    def submissions(self, x, mask, raw, round_index, noise_purpose=Purpose.NOISE, rep=None) -> list[SparseUpdate]:
        """Turn raw local updates into submitted updates, in ascending client id."""
        cfg = self.config
        ids = sorted(raw)
        byz = [i for i in ids if self.clients[i].is_byzantine] if cfg.attack.kind != "none" else []
        benign = [i for i in ids if i not in byz]

        def noise_rng(i):
            keys = (round_index, i) if rep is None else (round_index, rep, i)
            return stream(cfg.seed, noise_purpose, *keys)

        out = {i: privatize(raw[i], mask, cfg.dp, noise_rng(i), i, round_index) for i in benign}
        if byz:
            view = AttackerView(
                x_global=x,
                mask=mask,
                attacker_updates=[raw[i] for i in byz],
                benign_updates=[raw[i] for i in benign] if cfg.attack.knowledge == "full" else [],
                knowledge=cfg.attack.knowledge,
            )
            crafted = craft(view, _with_target(cfg), len(byz), cfg.aggregator.f)
            for i, m in zip(byz, crafted):
                clipped = clip(apply_mask(m, mask), cfg.dp.clip)
                if cfg.attack.attacker_noise:
                    out[i] = perturb(clipped, mask, cfg.dp, noise_rng(i), i, round_index)
                else:
                    out[i] = SparseUpdate(mask, clipped[mask.indices], i, round_index)
        return [out[i] for i in ids]

    # -- server side -----------------------------------------------------

    def aggregate(self, updates: list[SparseUpdate]) -> np.ndarray:
        dense = np.stack([u.dense() for u in updates])
        rule, f = self.config.aggregator.rule, self.config.aggregator.f
        if rule == "mean":
            # secure aggregation: the server only learns the sum
            return dense.sum(axis=0) / len(updates)
        reason = aggregators.admissibility_error(rule, len(updates), f)
        if reason:
            raise ProtocolError(f"round aborted: {reason}")
        return aggregators.aggregate(rule, dense, f)

    def run_round(self, state: ServerState) -> RoundResult:
        cfg = self.config
        start = time.perf_counter()
        t = state.round
        if t >= cfg.T:
            raise ProtocolError(f"round {t} is beyond T={cfg.T}")
        sampled = sample_clients(cfg.n, cfg.s, t, cfg.seed)
        diag = None
        if cfg.diagnostic_reps > 0:
            diag = variance_diagnostic(self, state, cfg.diagnostic_reps)
        raw = self.raw_updates(state.x, sampled, t)
        updates = self.submissions(state.x, state.mask, raw, t)
        step = self.aggregate(updates)
        x_next = state.x - step
        if not np.all(np.isfinite(x_next)):
            raise TrainingDivergedError(f"global model became non-finite in round {t}")
        mask_next = generate_mask(x_next, self.k)
        acc, test_loss = evaluate(self.spec, x_next, self.test)
        metrics = RoundMetrics(
            round=t + 1,
            test_accuracy=acc,
            test_loss=test_loss,
            eps_theorem1=ledger_or_inf(self.privacy, t + 1),
            lhs_discrepancy=diag.lhs if diag else None,
            rhs_bound_terms=diag.rhs_terms if diag else None,
            wall_time=time.perf_counter() - start,
        )
        return RoundResult(x_next, mask_next, metrics, updates, sampled)

    def run(self, on_round=None):
        """Run all ``T`` rounds; returns ``(final_model, metrics)``.

        ``on_round(result)`` is called after every round, e.g. to flush CSV rows.
        """
        state = self.initial_state()
        history = []
        for _ in range(self.config.T):
            result = self.run_round(state)
            history.append(result.metrics)
            log.info(
                "round %d acc=%.4f loss=%.4f eps=%.4g",
                result.metrics.round, result.metrics.test_accuracy,
                result.metrics.test_loss, result.metrics.eps_theorem1,
            )
            if on_round is not None:
                on_round(result)
            state = ServerState(result.x, result.mask, state.round + 1)
        return state.x, history


def _with_target(cfg: ExperimentConfig):
    if cfg.attack.target_rule is None:
        return replace(cfg.attack, target_rule=cfg.aggregator.rule)
    return cfg.attack


def run_experiment(config: ExperimentConfig, on_round=None, **kwargs):
    """Convenience wrapper: build a :class:`Federation` and run it."""
    return Federation(config, **kwargs).run(on_round)
