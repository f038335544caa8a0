"""Optimal search: A* with the h_max heuristic, plus brute-force oracles.

Used both for labeling states with exact costs-to-go and for verifying the
closed-form value functions.  All searches are deterministic: the open list
orders by (f, larger g first, FIFO insertion).
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass

from .errors import BudgetExceeded
from .pddl import GroundTask, State

DEFAULT_BUDGET = 10**6

SOLVED = "solved"
UNSOLVABLE = "unsolvable"
BUDGET = "budget"


@dataclass(frozen=True)
class Plan:
    """Action sequence plus the induced state trajectory (one state longer)."""

    actions: tuple[int, ...]
    states: tuple[State, ...]

    @property
    def cost(self) -> int:
        return len(self.actions)


@dataclass(frozen=True)
class SearchResult:
    status: str  # SOLVED | UNSOLVABLE | BUDGET
    plan: Plan | None
    expansions: int

    @property
    def cost(self) -> int | None:
        return self.plan.cost if self.plan is not None else None


@dataclass(frozen=True)
class ReachableSet:
    states: frozenset
    truncated: bool


def hmax(task: GroundTask, state: State) -> float:
    """Delete-relaxation max heuristic; math.inf when the goal is unreachable.

    Least fixed point of: cost(a) = 0 for atoms in the state, otherwise the
    cheapest 1 + max-precondition-cost over actions adding the atom.  Computed
    Dijkstra-style over atoms.  Assumes the state carries no static atoms
    beyond the initial state's (true for every reachable state); otherwise it
    falls back to the full action set.
    """
    state = frozenset(state)
    if task.goal <= state:
        return 0.0
    actions = task.actions
    cost = {}
    queue: list[tuple[float, int]] = []
    for a in state:
        cost[a] = 0.0
        heapq.heappush(queue, (0.0, a))

    candidates = list(task.candidate_actions(state))
    remaining = {}
    by_atom: dict[int, list[int]] = {}
    no_pre: list[int] = []
    for ai in candidates:
        pre = actions[ai].pre
        remaining[ai] = len(pre)
        if not pre:
            no_pre.append(ai)
        for a in pre:
            by_atom.setdefault(a, []).append(ai)

    def trigger(ai: int):
        pre = actions[ai].pre
        c = 1.0 + (max(cost[a] for a in pre) if pre else 0.0)
        for a in actions[ai].add:
            if c < cost.get(a, math.inf):
                cost[a] = c
                heapq.heappush(queue, (c, a))

    for ai in no_pre:
        trigger(ai)
    done = set()
    while queue:
        c, atom = heapq.heappop(queue)
        if atom in done or c > cost.get(atom, math.inf):
            continue
        done.add(atom)
        for ai in by_atom.get(atom, ()):
            remaining[ai] -= 1
            if remaining[ai] == 0:
                trigger(ai)

    return max(cost.get(g, math.inf) for g in task.goal)


def astar_optimal(
    task: GroundTask, state: State | None = None, budget: int = DEFAULT_BUDGET
) -> SearchResult:
    """Minimum-length plan from `state` (default: the initial state).

    Returns UNSOLVABLE when no plan exists and BUDGET when the expansion
    budget runs out before an answer is known.
    """
    start = frozenset(state) if state is not None else task.initial
    expansions = 0
    if task.is_goal(start):
        return SearchResult(SOLVED, Plan((), (start,)), expansions)

    h0 = hmax(task, start)
    if math.isinf(h0):
        return SearchResult(UNSOLVABLE, None, expansions)

    counter = 0
    open_heap: list[tuple[float, int, int, State]] = [(h0, 0, counter, start)]
    best_g: dict[State, int] = {start: 0}
    parent: dict[State, tuple[State, int]] = {}
    while open_heap:
        f, neg_g, _, current = heapq.heappop(open_heap)
        g = -neg_g
        if g > best_g.get(current, math.inf):
            continue
        if expansions >= budget:
            return SearchResult(BUDGET, None, expansions)
        expansions += 1
        for action_id, nxt in task.successors(current):
            ng = g + 1
            if ng >= best_g.get(nxt, math.inf):
                continue
            best_g[nxt] = ng
            parent[nxt] = (current, action_id)
            if task.is_goal(nxt):
                return SearchResult(SOLVED, _extract_plan(parent, start, nxt), expansions)
            h = hmax(task, nxt)
            if math.isinf(h):
                continue
            counter += 1
            heapq.heappush(open_heap, (ng + h, -ng, counter, nxt))
    return SearchResult(UNSOLVABLE, None, expansions)


def _extract_plan(parent, start: State, goal_state: State) -> Plan:
    actions: list[int] = []
    states: list[State] = [goal_state]
    current = goal_state
    while current != start:
        prev, action_id = parent[current]
        actions.append(action_id)
        states.append(prev)
        current = prev
    actions.reverse()
    states.reverse()
    return Plan(tuple(actions), tuple(states))


def optimal_cost(
    task: GroundTask, state: State | None = None, budget: int = DEFAULT_BUDGET
) -> int | None:
    """Exact cost-to-go, or None when no plan exists.

    Raises BudgetExceeded when the search budget runs out, so callers can
    tell "hard" apart from "unsolvable".
    """
    result = astar_optimal(task, state, budget)
    if result.status == BUDGET:
        raise BudgetExceeded(f"no answer within {budget} expansions")
    return result.cost


def reachable_states(task: GroundTask, limit: int) -> ReachableSet:
    """BFS-closed set of states reachable from the initial state.

    Stops as soon as `limit` states are collected; `truncated` reports
    whether anything was left undiscovered.
    """
    if limit <= 0:
        raise ValueError("limit must be positive")
    seen = {task.initial}
    queue = deque([task.initial])
    while queue:
        current = queue.popleft()
        for _, nxt in task.successors(current):
            if nxt in seen:
                continue
            if len(seen) >= limit:
                return ReachableSet(frozenset(seen), True)
            seen.add(nxt)
            queue.append(nxt)
    return ReachableSet(frozenset(seen), False)


def optimal_cost_table(task: GroundTask, limit: int = 10**5) -> dict[State, int | None]:
    """Exact V* for every reachable state at once (exhaustive oracle).

    Forward BFS enumerates the reachable space, then a multi-source backward
    BFS from its goal states assigns costs; unreachable-goal states map to
    None.  Raises BudgetExceeded if the space exceeds `limit`.
    """
    reach = reachable_states(task, limit)
    if reach.truncated:
        raise BudgetExceeded(f"more than {limit} reachable states")
    predecessors: dict[State, list[State]] = {s: [] for s in reach.states}
    goal_states = []
    for state in reach.states:
        if task.is_goal(state):
            goal_states.append(state)
        for _, nxt in task.successors(state):
            predecessors[nxt].append(state)

    table: dict[State, int | None] = {s: None for s in reach.states}
    queue = deque()
    for state in goal_states:
        table[state] = 0
        queue.append(state)
    while queue:
        current = queue.popleft()
        cost = table[current]
        for prev in predecessors[current]:
            if table[prev] is None:
                table[prev] = cost + 1
                queue.append(prev)
    return table
