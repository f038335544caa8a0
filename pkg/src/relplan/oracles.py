"""Closed-form optimal value functions and their derived-feature building blocks.

Each `vstar_*` function evaluates the exact cost-to-go of a state for one
goal family (single-atom goals over the shipped domain encodings), composed
from shortest-path / reachability features over derived unary predicates and
edge relations.  They serve as ground truth against search and as probe
targets.  All of them return 0 exactly on goal states and None where no plan
exists.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .errors import DomainMismatch
from .pddl import GroundTask, State

# ── Derived predicates and path features ─────────────────────────────────────


@dataclass(frozen=True)
class DerivedUnary:
    """Extension of a derived unary predicate over object indices."""

    name: str
    members: frozenset

    @staticmethod
    def of(name: str, members) -> "DerivedUnary":
        return DerivedUnary(name, frozenset(members))


@dataclass(frozen=True)
class EdgeRelation:
    """Derived binary relation over object indices."""

    name: str
    pairs: frozenset

    @staticmethod
    def of(name: str, pairs) -> "EdgeRelation":
        return EdgeRelation(name, frozenset((a, b) for a, b in pairs))

    def inverse(self) -> "EdgeRelation":
        return EdgeRelation(f"{self.name}-inv", frozenset((b, a) for a, b in self.pairs))


def shortest_path_distance(
    targets: DerivedUnary, edges: EdgeRelation, sources: DerivedUnary
) -> int | None:
    """Minimum k such that some source reaches a target in k edge steps.

    Exact breadth-first search over the edge relation (no unrolling bound);
    None when no source reaches any target.
    """
    if not targets.members or not sources.members:
        return None
    incoming: dict[object, list] = {}
    for a, b in edges.pairs:
        incoming.setdefault(b, []).append(a)
    dist = {t: 0 for t in targets.members}
    queue = deque(targets.members)
    best = min((dist[s] for s in sources.members if s in dist), default=None)
    if best == 0:
        return 0
    while queue:
        node = queue.popleft()
        d = dist[node] + 1
        for prev in incoming.get(node, ()):
            if prev not in dist:
                dist[prev] = d
                if prev in sources.members:
                    return d if best is None else min(best, d)
                queue.append(prev)
    return best


def conn(targets: DerivedUnary, edges: EdgeRelation, sources: DerivedUnary, bound: int) -> bool:
    """True iff some source reaches a target within `bound` edge steps."""
    if bound < 0:
        raise ValueError("bound must be non-negative")
    d = shortest_path_distance(targets, edges, sources)
    return d is not None and d <= bound


# ── State access helpers ─────────────────────────────────────────────────────


def extensions(task: GroundTask, state: State) -> dict[str, set]:
    """Per-predicate sets of argument tuples true in the state."""
    ext: dict[str, set] = {p.name: set() for p in task.predicates}
    for atom_id in state:
        atom = task.atoms[atom_id]
        ext[task.predicates[atom.predicate].name].add(atom.args)
    return ext


def _require_predicates(task: GroundTask, tag: str, needed: dict[str, int]):
    have = {p.name: p.arity for p in task.predicates}
    for name, arity in needed.items():
        if have.get(name) != arity:
            raise DomainMismatch(
                f"{tag}: task domain {task.domain.name!r} lacks predicate {name}/{arity}"
            )


def _single_goal_atom(task: GroundTask, tag: str, predicate: str) -> tuple:
    if len(task.goal) != 1:
        raise DomainMismatch(f"{tag}: expected a single {predicate} goal atom, got {len(task.goal)}")
    atom = task.atoms[next(iter(task.goal))]
    name = task.predicates[atom.predicate].name
    if name != predicate:
        raise DomainMismatch(f"{tag}: expected a {predicate} goal, got {name}")
    return atom.args


# ── Blocksworld: clear(x) ────────────────────────────────────────────────────


def _blocks_clear_parts(task: GroundTask, state: State):
    _require_predicates(task, "blocks-clear", {"on": 2, "clear": 1, "holding": 1, "armempty": 0})
    (x,) = _single_goal_atom(task, "blocks-clear", "clear")
    ext = extensions(task, frozenset(state))
    pending = (x,) not in ext["clear"]
    holding = bool(ext["holding"])
    # Step from a block to the block directly on top of it; a chain of k steps
    # ending at a clear block means k blocks sit above the start.
    up = EdgeRelation.of("on-top-of", ((b, a) for a, b in ext["on"]))
    clear = DerivedUnary.of("clear", (t[0] for t in ext["clear"]))
    above = shortest_path_distance(clear, up, DerivedUnary.of("goal-block", [x]))
    return pending, holding, above


def vstar_blocks_clear(task: GroundTask, state: State) -> int | None:
    pending, holding, above = _blocks_clear_parts(task, state)
    if not pending:
        return 0
    value = 1 if holding else 0
    if above is not None and above >= 1:
        value += 2 * above - 1
    return value


# ── Blocksworld: on(x, y) ────────────────────────────────────────────────────


def _blocks_on_parts(task: GroundTask, state: State):
    _require_predicates(task, "blocks-on", {"on": 2, "clear": 1, "holding": 1, "armempty": 0})
    x, y = _single_goal_atom(task, "blocks-on", "on")
    ext = extensions(task, frozenset(state))
    pending = (x, y) not in ext["on"]
    holding = bool(ext["holding"])
    not_ready = (y,) not in ext["clear"] or (x,) not in ext["holding"]
    up = EdgeRelation.of("on-top-of", ((b, a) for a, b in ext["on"]))
    down = EdgeRelation.of("on", ext["on"])
    clear = DerivedUnary.of("clear", (t[0] for t in ext["clear"]))
    bound = len(task.objects)
    above_x = shortest_path_distance(clear, up, DerivedUnary.of("x", [x]))
    above_y = shortest_path_distance(clear, up, DerivedUnary.of("y", [y]))
    x_above_y = conn(DerivedUnary.of("y", [y]), down, DerivedUnary.of("x", [x]), bound)
    y_above_x = conn(DerivedUnary.of("x", [x]), down, DerivedUnary.of("y", [y]), bound)
    tower_x = above_x if (above_x is not None and above_x >= 1 and not x_above_y) else 0
    tower_y = above_y if (above_y is not None and above_y >= 1 and not y_above_x) else 0
    return pending, holding, not_ready, tower_x, tower_y, x_above_y, y_above_x


def vstar_blocks_on(task: GroundTask, state: State) -> int | None:
    pending, holding, not_ready, tower_x, tower_y, _, _ = _blocks_on_parts(task, state)
    if not pending:
        return 0
    return (1 if holding else 0) + (2 if not_ready else 0) + 2 * tower_x + 2 * tower_y


# ── Gripper: at(ball, room) ──────────────────────────────────────────────────


def _gripper_parts(task: GroundTask, state: State):
    _require_predicates(
        task, "gripper", {"at": 2, "at-robby": 1, "free": 1, "carry": 2, "ball": 1, "room": 1}
    )
    ball, dest = _single_goal_atom(task, "gripper", "at")
    ext = extensions(task, frozenset(state))
    pending = (ball, dest) not in ext["at"]
    robby = {t[0] for t in ext["at-robby"]}
    ball_rooms = {r for b, r in ext["at"] if b == ball}
    in_room = next(iter(ball_rooms)) if ball_rooms else None
    free_any = bool(ext["free"])
    pick_here = in_room is not None and in_room in robby
    pick_away = in_room is not None and in_room not in robby
    at_goal_room = dest in robby
    grippers_full = in_room is not None and not free_any
    return pending, pick_here, pick_away, at_goal_room, grippers_full


def vstar_gripper(task: GroundTask, state: State) -> int | None:
    pending, pick_here, pick_away, at_goal_room, grippers_full = _gripper_parts(task, state)
    if not pending:
        return 0
    return (
        (1 if pick_here else 0)
        + (3 if pick_away else 0)
        + (1 if at_goal_room else 2)
        + (1 if grippers_full else 0)
    )


# ── Transport: at(package, destination) ──────────────────────────────────────


def _transport_parts(task: GroundTask, state: State):
    _require_predicates(
        task,
        "transport",
        {"at": 2, "in": 2, "road": 2, "vehicle": 1, "capacity": 2, "capacity-predecessor": 2},
    )
    pkg, dest = _single_goal_atom(task, "transport", "at")
    ext = extensions(task, frozenset(state))
    pending = (pkg, dest) not in ext["at"]
    road = EdgeRelation.of("road", ext["road"])
    vehicles = {t[0] for t in ext["vehicle"]}
    with_space = {s2 for _, s2 in ext["capacity-predecessor"]}
    veh_locs = DerivedUnary.of("vehicle-at", (l for v, l in ext["at"] if v in vehicles))
    roomy_locs = DerivedUnary.of(
        "roomy-vehicle-at",
        (l for v, l in ext["at"] if v in vehicles and any(c in with_space for vv, c in ext["capacity"] if vv == v)),
    )
    dest_unary = DerivedUnary.of("goal-destination", [dest])
    pkg_locs = [l for p, l in ext["at"] if p == pkg]
    carrier = next((v for p, v in ext["in"] if p == pkg), None)

    truck_dist = pkg_dist = carrier_dist = None
    trucks_full = False
    if pkg_locs:
        here = DerivedUnary.of("package-at", pkg_locs)
        truck_dist = shortest_path_distance(veh_locs, road.inverse(), here)
        pkg_dist = shortest_path_distance(dest_unary, road, here)
        roomy_dist = shortest_path_distance(roomy_locs, road.inverse(), here)
        trucks_full = truck_dist is not None and roomy_dist != truck_dist
    elif carrier is not None:
        vloc = [l for v, l in ext["at"] if v == carrier]
        carrier_dist = shortest_path_distance(dest_unary, road, DerivedUnary.of("carrier-at", vloc))
    return pending, bool(pkg_locs), truck_dist, pkg_dist, carrier_dist, trucks_full


def vstar_transport(task: GroundTask, state: State) -> int | None:
    pending, at_location, truck_dist, pkg_dist, carrier_dist, trucks_full = _transport_parts(
        task, state
    )
    if not pending:
        return 0
    if at_location:
        if truck_dist is None or pkg_dist is None:
            return None
        return (truck_dist + 1) + (pkg_dist + 1) + (1 if trucks_full else 0)
    if carrier_dist is None:
        return None
    return carrier_dist + 1


# ── Visitall: visited(target) ────────────────────────────────────────────────


def _visitall_parts(task: GroundTask, state: State):
    _require_predicates(task, "visitall", {"at-robot": 1, "visited": 1, "connected": 2})
    (target,) = _single_goal_atom(task, "visitall", "visited")
    ext = extensions(task, frozenset(state))
    pending = (target,) not in ext["visited"]
    robot = DerivedUnary.of("robot-at", (t[0] for t in ext["at-robot"]))
    dist = shortest_path_distance(
        DerivedUnary.of("target", [target]), EdgeRelation.of("connected", ext["connected"]), robot
    )
    return pending, dist


def vstar_visitall(task: GroundTask, state: State) -> int | None:
    pending, dist = _visitall_parts(task, state)
    if not pending:
        return 0
    return dist


# ── Vacuum-M: clean(spot) on the shared map ──────────────────────────────────


def _vacuum_m_parts(task: GroundTask, state: State):
    _require_predicates(task, "vacuum-m", {"at": 2, "dirty": 1, "clean": 1, "adjacent": 2})
    (spot,) = _single_goal_atom(task, "vacuum-m", "clean")
    ext = extensions(task, frozenset(state))
    pending = (spot,) not in ext["clean"]
    robots = DerivedUnary.of("robot-at", (l for _, l in ext["at"]))
    adj_inv = EdgeRelation.of("adjacent", ext["adjacent"]).inverse()
    dist = shortest_path_distance(robots, adj_inv, DerivedUnary.of("spot", [spot]))
    return pending, dist


def vstar_vacuum_m(task: GroundTask, state: State) -> int | None:
    pending, dist = _vacuum_m_parts(task, state)
    if not pending:
        return 0
    return None if dist is None else dist + 1


# ── Dispatch and hand-crafted feature vectors ────────────────────────────────

VSTAR_FUNCTIONS = {
    "blocks-clear": vstar_blocks_clear,
    "blocks-on": vstar_blocks_on,
    "gripper": vstar_gripper,
    "transport": vstar_transport,
    "visitall": vstar_visitall,
    "vacuum-m": vstar_vacuum_m,
}


def vstar(domain_tag: str, task: GroundTask, state: State) -> int | None:
    try:
        fn = VSTAR_FUNCTIONS[domain_tag]
    except KeyError:
        raise DomainMismatch(
            f"no closed-form value function for {domain_tag!r}; known: {sorted(VSTAR_FUNCTIONS)}"
        ) from None
    return fn(task, state)


@dataclass(frozen=True)
class FeatureVector:
    """Named features: booleans as 0/1, distances as counts (None = unbounded)."""

    names: tuple[str, ...]
    values: tuple

    def numeric(self) -> list[float]:
        out = []
        for name, value in zip(self.names, self.values):
            if value is None:
                raise ValueError(f"feature {name!r} is unbounded in this state")
            out.append(float(value))
        return out


FEATURE_TAGS = (
    "blocks-clear",
    "blocks-on",
    "blocks-on-sigma",
    "gripper",
    "transport",
    "transport-sigma",
    "visitall",
)


def handcrafted_feature_vector(domain_tag: str, task: GroundTask, state: State) -> FeatureVector:
    """Feature vector of the domain's value-function analysis (probe target).

    Boolean features are guarded by goal-pendingness, so goal states map to
    all-zero vectors; distance features are exact counts.
    """
    if domain_tag in ("blocks-clear",):
        pending, holding, above = _blocks_clear_parts(task, state)
        if not pending:
            return FeatureVector(("pending-holding", "blocks-above-target"), (0, 0))
        dist = above if above is not None else 0
        return FeatureVector(
            ("pending-holding", "blocks-above-target"), (int(holding), dist)
        )
    if domain_tag in ("blocks-on", "blocks-on-sigma"):
        pending, holding, not_ready, tower_x, tower_y, x_above_y, y_above_x = _blocks_on_parts(
            task, state
        )
        if not pending:
            holding = not_ready = x_above_y = y_above_x = False
            tower_x = tower_y = 0
        names = (
            "pending-holding",
            "pending-not-ready",
            "blocks-above-x",
            "blocks-above-y",
            "x-above-y",
            "y-above-x",
        )
        values = (
            int(holding),
            int(not_ready),
            tower_x,
            tower_y,
            int(bool(x_above_y)),
            int(bool(y_above_x)),
        )
        if domain_tag == "blocks-on-sigma":
            return _sum_features(FeatureVector(names, values), "blocks-above-x", "blocks-above-y", "blocks-above-sum")
        return FeatureVector(names, values)
    if domain_tag == "gripper":
        pending, pick_here, pick_away, at_goal_room, grippers_full = _gripper_parts(task, state)
        if not pending:
            return FeatureVector(_GRIPPER_NAMES, (0, 0, 0, 0, 0))
        return FeatureVector(
            _GRIPPER_NAMES,
            (
                int(pick_here),
                int(pick_away),
                int(at_goal_room),
                int(not at_goal_room),
                int(grippers_full),
            ),
        )
    if domain_tag in ("transport", "transport-sigma"):
        pending, at_location, truck_dist, pkg_dist, carrier_dist, trucks_full = _transport_parts(
            task, state
        )
        names = ("truck-distance", "package-distance", "carrier-distance", "nearest-trucks-full")
        if not pending:
            values = (0, 0, 0, 0)
        else:
            values = (
                truck_dist if at_location else 0,
                pkg_dist if at_location else 0,
                carrier_dist if not at_location else 0,
                int(trucks_full),
            )
        if domain_tag == "transport-sigma":
            return _sum_features(
                FeatureVector(names, values), "package-distance", "carrier-distance", "delivery-distance"
            )
        return FeatureVector(names, values)
    if domain_tag == "visitall":
        pending, dist = _visitall_parts(task, state)
        return FeatureVector(("target-distance",), (dist if pending else 0,))
    raise DomainMismatch(f"no hand-crafted features for {domain_tag!r}; known: {FEATURE_TAGS}")


_GRIPPER_NAMES = ("pick-here", "pick-away", "robby-at-goal", "robby-away", "grippers-full")


def _sum_features(vector: FeatureVector, first: str, second: str, summed: str) -> FeatureVector:
    """Replace two numerical features by their sum (the Σ variants)."""
    i, j = vector.names.index(first), vector.names.index(second)
    a, b = vector.values[i], vector.values[j]
    total = None if (a is None or b is None) else a + b
    names, values = [], []
    for idx, (name, value) in enumerate(zip(vector.names, vector.values)):
        if idx == i:
            names.append(summed)
            values.append(total)
        elif idx != j:
            names.append(name)
            values.append(value)
    return FeatureVector(tuple(names), tuple(values))
