"""Update-set and update-multiset semantics of rules.

``update_sets`` and ``update_multisets`` compute, case by case over the
rule constructors, the full family of update (multi)sets a rule yields
over a state and valuation. Families and their members are always
finite, and both functions return them in a canonical order.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable

import itertools

from .ast import (
    Assign,
    Choose,
    ForallRule,
    If,
    Let,
    Par,
    Rule,
    Seq,
    free_vars,
)
from .errors import UndefinedAggregate
from .state import (
    UNDEF,
    AlgNum,
    Location,
    State,
    UndefType,
    Update,
    UpdateMultiset,
    UpdateSet,
    Valuation,
    apply,
    is_consistent,
)


class UpdateSetFamily:
    """A finite set of update sets, canonically ordered."""

    __slots__ = ("sets",)

    def __init__(self, sets: Iterable[UpdateSet] = ()):
        object.__setattr__(self, "sets", tuple(sorted(set(sets), key=UpdateSet.key)))

    def __setattr__(self, *a):
        raise AttributeError("UpdateSetFamily is immutable")

    def __iter__(self):
        return iter(self.sets)

    def __len__(self):
        return len(self.sets)

    def __contains__(self, d):
        return d in self.sets

    def __eq__(self, other):
        return isinstance(other, UpdateSetFamily) and self.sets == other.sets

    def __hash__(self):
        return hash(self.sets)

    def __str__(self):
        return "{ " + ", ".join(str(d) for d in self.sets) + " }"

    __repr__ = __str__


class UpdateMultisetFamily:
    """A finite set of update multisets, canonically ordered."""

    __slots__ = ("multisets",)

    def __init__(self, multisets: Iterable[UpdateMultiset] = ()):
        object.__setattr__(
            self, "multisets", tuple(sorted(set(multisets), key=UpdateMultiset.key))
        )

    def __setattr__(self, *a):
        raise AttributeError("UpdateMultisetFamily is immutable")

    def __iter__(self):
        return iter(self.multisets)

    def __len__(self):
        return len(self.multisets)

    def __contains__(self, dm):
        return dm in self.multisets

    def __eq__(self, other):
        return isinstance(other, UpdateMultisetFamily) and self.multisets == other.multisets

    def __hash__(self):
        return hash(self.multisets)

    def __str__(self):
        return "{ " + ", ".join(str(m) for m in self.multisets) + " }"

    __repr__ = __str__


# ---------------------------------------------------------------------------
# Location operators


def location_operator_apply(op: str, values) -> AlgNum | UndefType:
    """Aggregate a multiset of algorithmic values into a single value
    with exact rational arithmetic. COUNT counts with multiplicity;
    SUM/COUNT of nothing are 0, MIN/MAX/AVG of nothing are undefined.
    An undefined input poisons every operator except COUNT."""
    values = list(values)
    if op == "COUNT":
        return AlgNum(len(values))
    if not values:
        if op == "SUM":
            return AlgNum(0)
        raise UndefinedAggregate(f"{op} of an empty multiset")
    if any(isinstance(v, UndefType) for v in values):
        return UNDEF
    if not all(isinstance(v, AlgNum) for v in values):
        raise UndefinedAggregate(f"{op} over non-algorithmic values")
    nums = [v.value for v in values]
    if op == "SUM":
        return AlgNum(sum(nums))
    if op == "MIN":
        return AlgNum(min(nums))
    if op == "MAX":
        return AlgNum(max(nums))
    if op == "AVG":
        return AlgNum(sum(nums) / Fraction(len(nums)))
    raise UndefinedAggregate(f"unknown location operator {op!r}")


# ---------------------------------------------------------------------------
# Merge helpers


def seq_merge(d1: UpdateSet, d2: UpdateSet) -> UpdateSet:
    """Sequential merge: the second set wins per location, updates of
    the first survive only at untouched locations."""
    locs2 = d2.locations()
    return UpdateSet(set(d2.updates) | {u for u in d1.updates if u.location not in locs2})


def seq_merge_multiset(dm1: UpdateMultiset, dm2: UpdateMultiset) -> UpdateMultiset:
    locs2 = dm2.locations()
    return dm2.msum(dm1.restrict(lambda u: u.location not in locs2))


def collapse_let(dm: UpdateMultiset, loc: Location, op: str):
    """Collapse every update to loc into one aggregated update.

    Returns the (update set, update multiset) pair of the two let
    clauses. When the body yields no update to loc, no aggregate update
    is emitted and the rest passes through unchanged.
    """
    values = dm.values_at(loc)
    rest = dm.restrict(lambda u: u.location != loc)
    if not values:
        return rest.support(), rest
    agg = Update(loc, location_operator_apply(op, values))
    collapsed_set = UpdateSet({agg} | set(rest.support().updates))
    collapsed_multiset = UpdateMultiset({agg: 1}).msum(rest)
    return collapsed_set, collapsed_multiset


# ---------------------------------------------------------------------------
# The two semantic functions

_memo_sets: dict = {}
_memo_multisets: dict = {}
_MEMO_LIMIT = 50000


def _memo_key(r, s, z, budget):
    zslice = {}
    for kind, name in free_vars(r):
        if kind == "db":
            zslice[("db", name)] = z.db.get(name)
        elif kind == "alg":
            zslice[("alg", name)] = z.alg.get(name)
    return (r, s.full_key(), tuple(sorted(zslice.items(), key=repr)), budget.key())


def clear_memo():
    _memo_sets.clear()
    _memo_multisets.clear()


def _eval_guard(phi, s, z, budget) -> bool:
    from .evaluator import eval_formula

    return eval_formula(phi, s, z, budget)


def _eval_term(t, s, z, budget):
    from .evaluator import eval_term

    return eval_term(t, s, z, budget)


def _budget_for(s, budget):
    if budget is None:
        from .evaluator import default_budget

        return default_budget(s)
    return budget


def _witnesses(r, s: State, z: Valuation, budget) -> list:
    return [a for a in s.db_carrier if _eval_guard(r.guard, s, z.bind_db(r.var, a), budget)]


def update_sets(r: Rule, s: State, z: Valuation = None, budget=None) -> UpdateSetFamily:
    """The family of update sets the rule yields over the state under
    the valuation."""
    z = z if z is not None else Valuation()
    budget = _budget_for(s, budget)
    key = _memo_key(r, s, z, budget)
    hit = _memo_sets.get(key)
    if hit is not None:
        return hit
    if len(_memo_sets) > _MEMO_LIMIT:
        _memo_sets.clear()

    if isinstance(r, Assign):
        args = tuple(_eval_term(t, s, z, budget) for t in r.args)
        value = _eval_term(r.rhs, s, z, budget)
        fam = UpdateSetFamily([UpdateSet([Update(Location(r.fname, args), value)])])
    elif isinstance(r, If):
        if _eval_guard(r.guard, s, z, budget):
            fam = update_sets(r.rule, s, z, budget)
        else:
            fam = UpdateSetFamily([UpdateSet()])
    elif isinstance(r, ForallRule):
        branches = [
            update_sets(r.rule, s, z.bind_db(r.var, a), budget)
            for a in _witnesses(r, s, z, budget)
        ]
        out = set()
        for choice in itertools.product(*branches):
            union = UpdateSet()
            for d in choice:
                union = union.union(d)
            out.add(union)
        fam = UpdateSetFamily(out)
    elif isinstance(r, Choose):
        out = set()
        for a in _witnesses(r, s, z, budget):
            out.update(update_sets(r.rule, s, z.bind_db(r.var, a), budget))
        fam = UpdateSetFamily(out)
    elif isinstance(r, Par):
        fam = UpdateSetFamily(
            d1.union(d2)
            for d1 in update_sets(r.left, s, z, budget)
            for d2 in update_sets(r.right, s, z, budget)
        )
    elif isinstance(r, Seq):
        out = set()
        for d1 in update_sets(r.first, s, z, budget):
            if not is_consistent(d1):
                out.add(d1)
                continue
            for d2 in update_sets(r.second, apply(s, d1), z, budget):
                out.add(seq_merge(d1, d2))
        fam = UpdateSetFamily(out)
    elif isinstance(r, Let):
        loc = Location(r.fname, tuple(_eval_term(t, s, z, budget) for t in r.args))
        fam = UpdateSetFamily(
            collapse_let(dm, loc, r.op)[0] for dm in update_multisets(r.rule, s, z, budget)
        )
    else:
        raise TypeError(f"not a rule: {r!r}")

    _memo_sets[key] = fam
    return fam


def update_multisets(r: Rule, s: State, z: Valuation = None, budget=None) -> UpdateMultisetFamily:
    """The family of update multisets the rule yields; parallel and
    forall combinations keep multiplicities."""
    z = z if z is not None else Valuation()
    budget = _budget_for(s, budget)
    key = _memo_key(r, s, z, budget)
    hit = _memo_multisets.get(key)
    if hit is not None:
        return hit
    if len(_memo_multisets) > _MEMO_LIMIT:
        _memo_multisets.clear()

    if isinstance(r, Assign):
        args = tuple(_eval_term(t, s, z, budget) for t in r.args)
        value = _eval_term(r.rhs, s, z, budget)
        fam = UpdateMultisetFamily([UpdateMultiset([Update(Location(r.fname, args), value)])])
    elif isinstance(r, If):
        if _eval_guard(r.guard, s, z, budget):
            fam = update_multisets(r.rule, s, z, budget)
        else:
            fam = UpdateMultisetFamily([UpdateMultiset()])
    elif isinstance(r, ForallRule):
        branches = [
            update_multisets(r.rule, s, z.bind_db(r.var, a), budget)
            for a in _witnesses(r, s, z, budget)
        ]
        out = set()
        for choice in itertools.product(*branches):
            total = UpdateMultiset()
            for dm in choice:
                total = total.msum(dm)
            out.add(total)
        fam = UpdateMultisetFamily(out)
    elif isinstance(r, Choose):
        out = set()
        for a in _witnesses(r, s, z, budget):
            out.update(update_multisets(r.rule, s, z.bind_db(r.var, a), budget))
        fam = UpdateMultisetFamily(out)
    elif isinstance(r, Par):
        fam = UpdateMultisetFamily(
            m1.msum(m2)
            for m1 in update_multisets(r.left, s, z, budget)
            for m2 in update_multisets(r.right, s, z, budget)
        )
    elif isinstance(r, Seq):
        out = set()
        for dm1 in update_multisets(r.first, s, z, budget):
            d1 = dm1.support()
            if not is_consistent(d1):
                out.add(dm1)
                continue
            for dm2 in update_multisets(r.second, apply(s, d1), z, budget):
                out.add(seq_merge_multiset(dm1, dm2))
        fam = UpdateMultisetFamily(out)
    elif isinstance(r, Let):
        loc = Location(r.fname, tuple(_eval_term(t, s, z, budget) for t in r.args))
        fam = UpdateMultisetFamily(
            collapse_let(dm, loc, r.op)[1] for dm in update_multisets(r.rule, s, z, budget)
        )
    else:
        raise TypeError(f"not a rule: {r!r}")

    _memo_multisets[key] = fam
    return fam
