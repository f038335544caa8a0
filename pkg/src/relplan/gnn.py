"""Relational message-passing value network.

A state is encoded as objects plus one tuple-set per relation (domain
predicates from the state, goal predicates from the instance goal).  Each
round, every true atom R(o_1..o_n) computes one message per argument
position with the relation's MLP applied to its objects' embeddings; every
object aggregates its incoming message multiset (sum or smooth max; an empty
multiset aggregates to the zero vector) and passes (embedding, aggregate)
through the update MLP.  The readout pools per-object transforms with a sum
and maps the pool to a scalar.

Nullary predicates carry no objects, so a true 0-ary atom is encoded as a
unary relation holding every object (a broadcast); its goal copy likewise.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import ContractViolation, VocabularyError
from .pddl import DomainDef, GroundTask, State

GOAL_SUFFIX = "_G"


@dataclass(frozen=True)
class GnnConfig:
    dim: int = 32  # embedding width k (even: zero half + random half)
    rounds: int = 30  # message-passing rounds L
    aggregation: str = "max"  # 'sum' or smooth 'max' (LogSumExp)
    out_dim: int = 1  # q
    init: str = "random-half"  # or 'zero' (for invariance tests)
    hidden: int = 0  # MLP hidden width; 0 means same as dim

    def __post_init__(self):
        if self.dim % 2 or self.dim <= 0:
            raise ContractViolation(f"embedding dim must be positive and even, got {self.dim}")
        if self.rounds < 1:
            raise ContractViolation("rounds must be >= 1")
        if self.aggregation not in ("sum", "max"):
            raise ContractViolation(f"aggregation must be 'sum' or 'max', got {self.aggregation!r}")
        if self.init not in ("random-half", "zero"):
            raise ContractViolation(f"init must be 'random-half' or 'zero', got {self.init!r}")
        if self.out_dim < 1:
            raise ContractViolation("out_dim must be >= 1")

    @property
    def hidden_width(self) -> int:
        return self.hidden or self.dim


@dataclass(frozen=True)
class RelationalStructure:
    """Objects 0..n-1 plus ordered tuple-sets per relation name."""

    num_objects: int
    relations: tuple[tuple[str, tuple[tuple[int, ...], ...]], ...]

    def get(self, name: str) -> tuple[tuple[int, ...], ...]:
        for rel, tuples in self.relations:
            if rel == name:
                return tuples
        raise KeyError(name)

    def names(self) -> list[str]:
        return [name for name, _ in self.relations]


def vocabulary(domain: DomainDef) -> dict[str, int]:
    """Relation name -> encoded arity: every predicate plus its goal copy.

    0-ary predicates are encoded with arity 1 (broadcast over objects).
    """
    vocab: dict[str, int] = {}
    for pred in domain.predicates:
        if pred.name.endswith(GOAL_SUFFIX):
            raise ContractViolation(
                f"predicate {pred.name!r} collides with the goal-relation suffix {GOAL_SUFFIX!r}"
            )
        vocab[pred.name] = max(pred.arity, 1)
        vocab[pred.name + GOAL_SUFFIX] = max(pred.arity, 1)
    return vocab


def encode(task: GroundTask, state: State) -> RelationalStructure:
    """Relational structure of a state: domain relations plus goal relations.

    Every domain predicate appears (possibly empty); goal copies appear for
    predicates present in the instance goal.  Tuple order follows the ground
    atom order, so encoding is deterministic.
    """
    n = len(task.objects)
    broadcast = tuple((o,) for o in range(n))
    by_pred: dict[int, list[tuple[int, ...]]] = {i: [] for i in range(len(task.predicates))}
    for atom_id in sorted(state):
        atom = task.atoms[atom_id]
        by_pred[atom.predicate].append(atom.args)
    relations: list[tuple[str, tuple[tuple[int, ...], ...]]] = []
    for pi, pred in enumerate(task.predicates):
        tuples = by_pred[pi]
        if pred.arity == 0:
            relations.append((pred.name, broadcast if tuples else ()))
        else:
            relations.append((pred.name, tuple(tuples)))
    goal_by_pred: dict[int, list[tuple[int, ...]]] = {}
    for atom_id in sorted(task.goal):
        atom = task.atoms[atom_id]
        goal_by_pred.setdefault(atom.predicate, []).append(atom.args)
    for pi in sorted(goal_by_pred, key=lambda pi: task.predicates[pi].name):
        pred = task.predicates[pi]
        tuples = broadcast if pred.arity == 0 else tuple(goal_by_pred[pi])
        relations.append((pred.name + GOAL_SUFFIX, tuples))
    return RelationalStructure(n, tuple(relations))


# ── Model ────────────────────────────────────────────────────────────────────


class GnnModel:
    """All trainable parameters: one message MLP per relation, one update MLP,
    two readout MLPs.  Immutable during forward passes; training mutates the
    parameter store exclusively."""

    def __init__(self, vocab: dict[str, int], config: GnnConfig, seed: int = 0):
        self.vocab = dict(sorted(vocab.items()))
        self.config = config
        self.seed = int(seed)
        k, h, q = config.dim, config.hidden_width, config.out_dim
        rng = np.random.default_rng(self.seed)
        store = ad.ParamStore()
        for name, arity in self.vocab.items():
            ad.init_dense(store, f"message.{name}.1", arity * k, h, rng)
            ad.init_dense(store, f"message.{name}.2", h, arity * k, rng)
        ad.init_dense(store, "update.1", 2 * k, h, rng)
        ad.init_dense(store, "update.2", h, k, rng)
        ad.init_dense(store, "readout1.1", k, h, rng)
        ad.init_dense(store, "readout1.2", h, k, rng)
        ad.init_dense(store, "readout2.1", k, h, rng)
        ad.init_dense(store, "readout2.2", h, q, rng)
        self.params = store

    def mlp(self, prefix: str, x: ad.Tensor) -> ad.Tensor:
        p = self.params
        hidden = ad.relu(ad.dense(x, p[f"{prefix}.1.w"], p[f"{prefix}.1.b"]))
        return ad.dense(hidden, p[f"{prefix}.2.w"], p[f"{prefix}.2.b"])

    def snapshot(self) -> dict[str, np.ndarray]:
        return self.params.copy_arrays()

    def restore(self, arrays: dict[str, np.ndarray]):
        self.params.load_arrays(arrays)


@dataclass(frozen=True)
class ForwardTrace:
    """Readout intermediates of one structure's forward pass."""

    final_embeddings: np.ndarray  # (objects, k): s^L per object
    readout_per_object: np.ndarray  # (objects, k): first readout MLP outputs
    pooled: np.ndarray  # (k,): their sum
    hidden: np.ndarray  # (k,): second readout MLP's ReLU layer
    output: np.ndarray  # (q,)

    @property
    def probe_features(self) -> np.ndarray:
        """Concatenated pooled/hidden/output vector (dim 2k + q)."""
        return np.concatenate([self.pooled, self.hidden, self.output])


# ── Batching ─────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class StructureBatch:
    num_objects: int
    num_graphs: int
    graph_ids: np.ndarray  # (num_objects,)
    relations: tuple[tuple[str, np.ndarray], ...]  # name -> (tuples, arity) int array
    sizes: tuple[int, ...] = field(default=())


def union(structures) -> StructureBatch:
    """Disjoint union of structures; object indices are offset per graph."""
    structures = list(structures)
    if not structures:
        raise ContractViolation("union: empty structure list")
    merged: dict[str, list[np.ndarray]] = {}
    graph_ids = []
    offset = 0
    sizes = []
    for gi, s in enumerate(structures):
        graph_ids.append(np.full(s.num_objects, gi, dtype=np.intp))
        sizes.append(s.num_objects)
        for name, tuples in s.relations:
            if tuples:
                merged.setdefault(name, []).append(np.asarray(tuples, dtype=np.intp) + offset)
            else:
                merged.setdefault(name, [])
        offset += s.num_objects
    relations = []
    for name in sorted(merged):
        chunks = merged[name]
        relations.append((name, np.concatenate(chunks) if chunks else np.zeros((0, 0), dtype=np.intp)))
    return StructureBatch(
        offset,
        len(structures),
        np.concatenate(graph_ids) if graph_ids else np.zeros(0, dtype=np.intp),
        tuple(relations),
        tuple(sizes),
    )


def init_embeddings(num_objects: int, config: GnnConfig, seed: int | None = None) -> np.ndarray:
    """Initial embeddings: zero half then standard-normal half (or all zero)."""
    half = config.dim // 2
    out = np.zeros((num_objects, config.dim))
    if config.init == "random-half":
        if seed is None:
            raise ContractViolation("random-half initialization needs a seed")
        out[:, half:] = np.random.default_rng(int(seed)).standard_normal((num_objects, half))
    return out


def _check_vocab(model: GnnModel, batch: StructureBatch):
    for name, tuples in batch.relations:
        arity = model.vocab.get(name)
        if arity is None:
            raise VocabularyError(f"relation {name!r} is not in the model vocabulary")
        if len(tuples) and tuples.shape[1] != arity:
            raise VocabularyError(
                f"relation {name!r} has arity {tuples.shape[1]}, model expects {arity}"
            )


def _run(model: GnnModel, batch: StructureBatch, init: np.ndarray):
    """Shared forward pass over a (possibly unioned) structure batch."""
    _check_vocab(model, batch)
    k = model.config.dim
    n = batch.num_objects
    if init.shape != (n, k):
        raise ContractViolation(f"init embeddings shape {init.shape}, expected {(n, k)}")
    states = ad.tensor(init)
    for _ in range(model.config.rounds):
        message_rows = []
        target_objects = []
        for name, tuples in batch.relations:
            if len(tuples) == 0:
                continue
            arity = tuples.shape[1]
            columns = [ad.gather_rows(states, tuples[:, j]) for j in range(arity)]
            inputs = columns[0] if arity == 1 else ad.concat(columns, axis=1)
            messages = model.mlp(f"message.{name}", inputs)  # (atoms, arity*k)
            message_rows.append(ad.reshape(messages, (len(tuples) * arity, k)))
            target_objects.append(tuples.reshape(-1))
        if message_rows:
            rows = message_rows[0] if len(message_rows) == 1 else ad.concat(message_rows, axis=0)
            targets = np.concatenate(target_objects)
            if model.config.aggregation == "sum":
                aggregated = ad.segment_sum(rows, targets, n)
            else:
                aggregated = ad.segment_logsumexp(rows, targets, n)
        else:
            aggregated = ad.tensor(np.zeros((n, k)))
        states = model.mlp("update", ad.concat([states, aggregated], axis=1))

    per_object = model.mlp("readout1", states)  # (n, k)
    pooled = ad.segment_sum(per_object, batch.graph_ids, batch.num_graphs)  # (graphs, k)
    p = model.params
    hidden = ad.relu(ad.dense(pooled, p["readout2.1.w"], p["readout2.1.b"]))
    output = ad.dense(hidden, p["readout2.2.w"], p["readout2.2.b"])  # (graphs, q)
    return {
        "states": states,
        "per_object": per_object,
        "pooled": pooled,
        "hidden": hidden,
        "output": output,
    }


def forward(
    model: GnnModel,
    structure: RelationalStructure,
    seed: int | None = None,
    init: np.ndarray | None = None,
) -> tuple[np.ndarray, ForwardTrace]:
    """Value vector (dim q) and readout trace for one structure."""
    batch = union([structure])
    if init is None:
        init = init_embeddings(structure.num_objects, model.config, seed)
    with ad.no_grad():
        nodes = _run(model, batch, init)
    trace = ForwardTrace(
        final_embeddings=nodes["states"].data.copy(),
        readout_per_object=nodes["per_object"].data.copy(),
        pooled=nodes["pooled"].data[0].copy(),
        hidden=nodes["hidden"].data[0].copy(),
        output=nodes["output"].data[0].copy(),
    )
    return trace.output, trace


def forward_values(
    model: GnnModel, structures, seed: int | None = None, init: np.ndarray | None = None
) -> np.ndarray:
    """Values for many structures in one unioned pass; shape (count, q)."""
    batch = union(structures)
    if init is None:
        init = init_embeddings(batch.num_objects, model.config, seed)
    with ad.no_grad():
        nodes = _run(model, batch, init)
    return nodes["output"].data.copy()


def loss(
    model: GnnModel,
    structure: RelationalStructure,
    label: float,
    seed: int | None = None,
    l1_coefficient: float = 0.0,
    init: np.ndarray | None = None,
) -> ad.Tensor:
    """|v - label| plus the optional L1 parameter penalty, on the tape."""
    batch = union([structure])
    if init is None:
        init = init_embeddings(structure.num_objects, model.config, seed)
    nodes = _run(model, batch, init)
    value = nodes["output"]
    out = ad.l1_loss(value, np.full(value.shape, float(label)))
    if l1_coefficient:
        out = ad.add(out, ad.l1_penalty(model.params, l1_coefficient))
    return out


def batch_loss(
    model: GnnModel,
    structures,
    labels,
    seed: int | None = None,
    l1_coefficient: float = 0.0,
) -> ad.Tensor:
    """Mean per-sample L1 deviation over a batch, plus the L1 penalty."""
    batch = union(structures)
    init = init_embeddings(batch.num_objects, model.config, seed)
    nodes = _run(model, batch, init)
    value = nodes["output"]
    targets = np.asarray(labels, dtype=np.float64).reshape(value.shape)
    out = ad.scale(ad.l1_loss(value, targets), 1.0 / batch.num_graphs)
    if l1_coefficient:
        out = ad.add(out, ad.l1_penalty(model.params, l1_coefficient))
    return out


# ── Checkpoints ──────────────────────────────────────────────────────────────


def save_model(path: str | Path, model: GnnModel, extra: dict | None = None):
    info = {
        "config": asdict(model.config),
        "vocab": model.vocab,
        "seed": model.seed,
    }
    if extra:
        info["extra"] = extra
    ad.save_checkpoint(path, model.params, info)


def load_model(path: str | Path) -> GnnModel:
    arrays, info = ad.load_checkpoint(path)
    config = GnnConfig(**info["config"])
    model = GnnModel(info["vocab"], config, seed=info.get("seed", 0))
    model.params.load_arrays(arrays)
    return model
