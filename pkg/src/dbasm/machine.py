"""Machine execution: the successor relation, seeded runs, and bounded
exhaustive exploration with per-state formula monitors."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from . import ast as A
from .errors import NonTerminating, SortError, Stuck
from .evaluator import QuantBudget, default_budget, eval_formula
from .semantics import update_sets
from .state import State, UpdateSet, Valuation, apply, is_consistent


@dataclass(frozen=True)
class Machine:
    signature: object
    rule: A.Rule
    init_predicate: A.Formula
    final_predicate: A.Formula
    name: str = ""

    def __post_init__(self):
        if not A.is_closed_rule(self.rule):
            raise SortError("machine rule must be closed")
        for phi in (self.init_predicate, self.final_predicate):
            if not A.is_pure(phi):
                raise SortError("machine predicates must be pure formulae")

    def is_initial(self, s: State) -> bool:
        return eval_formula(self.init_predicate, s, Valuation(), default_budget(s))

    def is_final(self, s: State) -> bool:
        return eval_formula(self.final_predicate, s, Valuation(), default_budget(s))


@dataclass(frozen=True)
class RunTrace:
    states: tuple[State, ...]
    chosen_updates: tuple[UpdateSet, ...]
    seed: int

    def __len__(self):
        return len(self.states)


def machine_from_file(mf) -> Machine:
    return Machine(mf.signature, mf.rule, mf.init_predicate, mf.final_predicate, mf.name)


def successors(m: Machine, s: State) -> tuple[tuple[UpdateSet, State], ...]:
    """One (update set, state) pair per consistent yielded update set,
    in canonical order. Inconsistent yields produce no successor."""
    out = []
    for delta in update_sets(m.rule, s, Valuation()):
        if is_consistent(delta):
            out.append((delta, apply(s, delta)))
    return tuple(out)


class _SplitMix:
    """splitmix64: tiny deterministic generator for successor choice."""

    def __init__(self, seed: int):
        self.state = seed & 0xFFFFFFFFFFFFFFFF

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
        return z ^ (z >> 31)

    def choice_index(self, n: int) -> int:
        return self.next() % n


def default_step_bound(s: State) -> int:
    return 10 * len(s.db_carrier) ** 2


def run(m: Machine, s0: State, seed: int = 0, max_steps: int | None = None) -> RunTrace:
    """One seeded run: start at an initial state, take the seeded pick
    among canonical successors until a final state."""
    if not m.is_initial(s0):
        raise ValueError("start state does not satisfy the initial-state predicate")
    bound = max_steps if max_steps is not None else default_step_bound(s0)
    rng = _SplitMix(seed)
    states = [s0]
    chosen = []
    current = s0
    while not m.is_final(current):
        succ = successors(m, current)
        if not succ:
            raise Stuck(f"no successor at non-final state after {len(chosen)} steps")
        delta, nxt = succ[rng.choice_index(len(succ))]
        chosen.append(delta)
        states.append(nxt)
        current = nxt
        if len(chosen) > bound:
            raise NonTerminating(f"exceeded the step bound of {bound}")
    return RunTrace(tuple(states), tuple(chosen), seed)


@dataclass
class Violation:
    monitor_index: int
    path: tuple[State, ...]

    @property
    def state(self) -> State:
        return self.path[-1]


@dataclass
class ExploreReport:
    states_visited: int = 0
    depth_reached: int = 0
    final_states: int = 0
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def explore(
    m: Machine,
    s0: State,
    depth_bound: int,
    monitors: tuple[A.Formula, ...] = (),
    budget: QuantBudget | None = None,
    stop_at_first: bool = False,
) -> ExploreReport:
    """Breadth-first exploration of the successor relation up to a depth
    bound, with state deduplication. Every monitor is evaluated at every
    reached state; violations record the path from the start state."""
    report = ExploreReport()
    seen = {s0.dedup_key()}
    queue = deque([(s0, 0, (s0,))])
    while queue:
        current, depth, path = queue.popleft()
        report.states_visited += 1
        report.depth_reached = max(report.depth_reached, depth)
        b = budget if budget is not None else default_budget(current)
        for i, phi in enumerate(monitors):
            if not eval_formula(phi, current, Valuation(), b):
                report.violations.append(Violation(i, path))
                if stop_at_first:
                    return report
        if m.is_final(current):
            report.final_states += 1
            continue
        if depth >= depth_bound:
            continue
        for _, nxt in successors(m, current):
            key = nxt.dedup_key()
            if key not in seen:
                seen.add(key)
                queue.append((nxt, depth + 1, path + (nxt,)))
    return report
