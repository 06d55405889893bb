"""Evaluation of terms and formulae over a state and valuation.

First-order database quantifiers enumerate the finite carrier.
Algorithmic quantifiers enumerate a finite pool of active values
carried in a ``QuantBudget`` (an under-approximation of the infinite
algorithmic domain; the pool always contains the undefined value).

Second-order quantifiers are evaluated under a policy:

* ``guarded`` (default): a quantifier is admitted when its body is
  anchored by an ``upd``/``upm`` guard (possibly behind a modal
  operator), in which case the enumeration domain is exactly the
  rule's yielded family, which is finite.
* ``pool`` with a bound k: enumerate every relation of the variable's
  sort over the carrier/pool row space up to size k.

Explicit per-variable domains in the budget override both policies.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field, replace
from typing import Mapping

from . import ast as A
from . import semantics as sem
from .errors import (
    SignatureError,
    SortError,
    UnboundedQuantifier,
    UnboundVariable,
)
from .state import (
    BUILTIN_ALG,
    DB,
    UNDEF,
    AlgNum,
    DbElem,
    Location,
    Signature,
    State,
    UndefType,
    Update,
    UpdateSet,
    Valuation,
    apply,
    apply_builtin,
    canon_key,
    is_alg_value,
    is_consistent,
    tag_multiset,
)

GUARDED = "guarded"
POOL = "pool"


@dataclass(frozen=True)
class QuantBudget:
    """Finite enumeration bounds for quantifiers."""

    alg_pool: frozenset = frozenset()
    so_policy: str = GUARDED
    pool_bound: int = 2
    so_domains: Mapping[str, tuple] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "alg_pool", frozenset(self.alg_pool) | {UNDEF})
        object.__setattr__(self, "so_domains", dict(self.so_domains))

    def sorted_pool(self):
        return sorted(self.alg_pool, key=canon_key)

    def with_values(self, values) -> "QuantBudget":
        extra = {v for v in values if is_alg_value(v)}
        if extra <= self.alg_pool:
            return self
        return replace(self, alg_pool=self.alg_pool | extra)

    def with_domain(self, var: str, relations) -> "QuantBudget":
        doms = dict(self.so_domains)
        doms[var] = tuple(frozenset(r) for r in relations)
        return replace(self, so_domains=doms)

    def key(self):
        return (
            tuple(canon_key(v) for v in self.sorted_pool()),
            self.so_policy,
            self.pool_bound,
            tuple(sorted(self.so_domains)),
        )


def default_budget(state: State, extras=(), so_policy=GUARDED, pool_bound=2) -> QuantBudget:
    """Active algorithmic values of the state plus caller extras."""
    pool = set(state.active_alg_values()) | {v for v in extras if is_alg_value(v)}
    cap = os.environ.get("DBASM_POOL_MAX")
    if cap is not None:
        pool = set(sorted(pool, key=canon_key)[: max(1, int(cap))]) | {UNDEF}
    return QuantBudget(frozenset(pool), so_policy, pool_bound)


# ---------------------------------------------------------------------------
# Relations <-> update (multi)sets


def rel_of_update_set(d: UpdateSet) -> frozenset:
    return frozenset((u.location.function, u.location.args, u.value) for u in d.updates)


def to_update_set(rel, sig: Signature) -> UpdateSet | None:
    """Decode a relation into an update set; None when a row is not a
    well-formed update over the signature."""
    updates = []
    for row in rel:
        if not (isinstance(row, tuple) and len(row) == 3):
            return None
        fname, args, value = row
        if not (isinstance(fname, str) and isinstance(args, tuple)):
            return None
        if not sig.has(fname) or not sig.is_dynamic(fname):
            return None
        if len(args) != sig.arity(fname):
            return None
        if not all(isinstance(a, DbElem) for a in args):
            return None
        if sig.value_sort(fname) == DB:
            if not isinstance(value, DbElem):
                return None
        elif not is_alg_value(value):
            return None
        updates.append(Update(Location(fname, args), value))
    return UpdateSet(updates)


def rel_alg_values(rel) -> set:
    """Algorithmic components appearing anywhere in a relation."""
    out = set()
    for row in rel:
        for part in row:
            if is_alg_value(part):
                out.add(part)
            elif isinstance(part, tuple):
                out.update(p for p in part if is_alg_value(p))
    return out


def _bind_so(z: Valuation, budget: QuantBudget, var: str, rel):
    return z.bind_so(var, rel), budget.with_values(rel_alg_values(rel))


# ---------------------------------------------------------------------------
# Terms


def eval_term(t, s: State, z: Valuation, budget: QuantBudget = None):
    budget = budget if budget is not None else default_budget(s)
    if isinstance(t, A.DbVar):
        if t.name not in z.db:
            raise UnboundVariable(f"database variable {t.name!r}")
        return z.db[t.name]
    if isinstance(t, A.AlgVar):
        if t.name not in z.alg:
            raise UnboundVariable(f"algorithmic variable {t.name!r}")
        return z.alg[t.name]
    if isinstance(t, A.Num):
        return t.value
    if isinstance(t, A.Apply):
        vals = tuple(eval_term(a, s, z, budget) for a in t.args)
        if t.fname in BUILTIN_ALG:
            return apply_builtin(t.fname, vals)
        return s.raw_lookup(t.fname, vals)
    if isinstance(t, A.RhoTerm):
        collected = []
        for a in s.db_carrier:
            z2 = z.bind_db(t.var, a)
            if eval_formula(t.guard, s, z2, budget):
                collected.append(eval_term(t.body, s, z2, budget))
        return sem.location_operator_apply(t.op, collected)
    raise TypeError(f"not a term: {t!r}")


# ---------------------------------------------------------------------------
# Formulae


def eval_formula(phi, s: State, z: Valuation = None, budget: QuantBudget = None) -> bool:
    z = z if z is not None else Valuation()
    budget = budget if budget is not None else default_budget(s)

    if isinstance(phi, A.Eq):
        return eval_term(phi.left, s, z, budget) == eval_term(phi.right, s, z, budget)
    if isinstance(phi, A.Not):
        return not eval_formula(phi.sub, s, z, budget)
    if isinstance(phi, A.And):
        return eval_formula(phi.left, s, z, budget) and eval_formula(phi.right, s, z, budget)
    if isinstance(phi, A.ForallDb):
        return all(
            eval_formula(phi.sub, s, z.bind_db(phi.var, a), budget) for a in s.db_carrier
        )
    if isinstance(phi, A.ForallAlg):
        return all(
            eval_formula(phi.sub, s, z.bind_alg(phi.var, v), budget)
            for v in budget.sorted_pool()
        )
    if isinstance(phi, A.ForallSO):
        return _eval_forall_so(phi, s, z, budget)
    if isinstance(phi, A.Upd):
        rel = _so_value(z, phi.var)
        delta = to_update_set(rel, s.signature)
        if delta is None:
            return False
        return delta in sem.update_sets(phi.rule, s, z, budget)
    if isinstance(phi, A.Upm):
        rel = _so_value(z, phi.var)
        dm = _to_update_multiset(rel, s.signature)
        if dm is None:
            return False
        return dm in sem.update_multisets(phi.rule, s, z, budget)
    if isinstance(phi, A.SOAtom):
        rel = _so_value(z, phi.var)
        return _atom_row(phi, s, z, budget) in rel
    if isinstance(phi, A.Modal):
        rel = _so_value(z, phi.var)
        delta = to_update_set(rel, s.signature)
        if delta is None or not is_consistent(delta):
            return True
        try:
            successor = apply(s, delta)
        except (SortError, SignatureError):
            return True
        return eval_formula(phi.sub, successor, z, budget)
    raise TypeError(f"not a formula: {phi!r}")


def _so_value(z: Valuation, var: str):
    if var not in z.so:
        raise UnboundVariable(f"second-order variable {var!r}")
    return z.so[var]


def _to_update_multiset(rel, sig: Signature):
    """Decode a tagged relation into the multiset it represents: the
    multiplicity of an update is its number of distinct tags."""
    from .state import untag

    for row in rel:
        if not (isinstance(row, tuple) and len(row) == 4):
            return None
        fname, args, value, tag = row
        if not (isinstance(fname, str) and isinstance(args, tuple) and is_alg_value(tag)):
            return None
        if not sig.has(fname) or not sig.is_dynamic(fname):
            return None
        if len(args) != sig.arity(fname) or not all(isinstance(a, DbElem) for a in args):
            return None
        if sig.value_sort(fname) == DB:
            if not isinstance(value, DbElem):
                return None
        elif not is_alg_value(value):
            return None
    return untag(rel)


def _atom_row(phi: A.SOAtom, s, z, budget):
    vals = [eval_term(t, s, z, budget) for t in phi.terms]
    if phi.sort == "M":
        return tuple(vals)
    arity = s.signature.arity(phi.fname)
    row = [phi.fname, tuple(vals[:arity])]
    rest = vals[arity:]
    if phi.sort in ("F", "G"):
        # value, tag, second argument tuple, value, tag, final component
        row.append(rest[0])
        row.append(rest[1])
        row.append(tuple(rest[2 : 2 + arity]))
        row.extend(rest[2 + arity :])
    else:
        row.extend(rest)
    return tuple(row)


# ---------------------------------------------------------------------------
# Second-order quantification


def _flatten_and(phi) -> list:
    if isinstance(phi, A.And):
        return _flatten_and(phi.left) + _flatten_and(phi.right)
    return [phi]


def _is_guard_for(conj, var: str) -> bool:
    if isinstance(conj, (A.Upd, A.Upm)) and conj.var == var:
        return True
    return (
        isinstance(conj, A.Modal)
        and isinstance(conj.sub, (A.Upd, A.Upm))
        and conj.sub.var == var
    )


def _find_guard(phi, var: str, banned: frozenset):
    """Search phi for an upd/upm guard on var that phi syntactically
    implies: the guard may sit in a conjunction, under double negation,
    or inside existential quantifiers over other variables. Guards
    depending on variables bound along the way are disqualified."""
    if _is_guard_for(phi, var):
        names = {name for _, name in A.free_vars(phi)} - {var}
        if names & banned:
            return None
        return phi
    if isinstance(phi, A.And):
        return _find_guard(phi.left, var, banned) or _find_guard(phi.right, var, banned)
    if isinstance(phi, A.Not) and isinstance(phi.sub, A.Not):
        return _find_guard(phi.sub.sub, var, banned)
    if isinstance(phi, A.Not) and isinstance(phi.sub, (A.ForallDb, A.ForallAlg, A.ForallSO)):
        inner = phi.sub
        if isinstance(inner.sub, A.Not):
            bound = inner.var
            if isinstance(inner, A.ForallSO) and bound == var:
                return None
            return _find_guard(inner.sub.sub, var, banned | {bound})
    return None


def _guard_family(guard, s: State, z: Valuation, budget: QuantBudget) -> tuple:
    """The finite relation domain a guard atom carves out."""
    if isinstance(guard, A.Upd):
        fam = sem.update_sets(guard.rule, s, z, budget)
        return tuple(rel_of_update_set(d) for d in fam)
    if isinstance(guard, A.Upm):
        fam = sem.update_multisets(guard.rule, s, z, budget)
        return tuple(tag_multiset(m) for m in fam)
    if isinstance(guard, A.Modal):
        rel = _so_value(z, guard.var)
        delta = to_update_set(rel, s.signature)
        if delta is None or not is_consistent(delta):
            raise UnboundedQuantifier(
                "modal guard over an inconsistent update set bounds nothing"
            )
        try:
            successor = apply(s, delta)
        except (SortError, SignatureError):
            raise UnboundedQuantifier(
                "modal guard over an inapplicable update set bounds nothing"
            ) from None
        return _guard_family(guard.sub, successor, z, budget)
    raise UnboundedQuantifier(f"not a guard: {guard!r}")


def guarded_so_domain(var: str, phi, s: State, z: Valuation, budget: QuantBudget) -> tuple:
    """Enumeration domain for a second-order quantifier with body phi.

    Under the guarded policy the body must be anchored by an upd/upm
    guard on var; the domain is then the rule's yielded family (tagged,
    for multisets). Under the pool policy, every relation of the sort
    up to the bound is enumerated.
    """
    if var in budget.so_domains:
        return budget.so_domains[var]
    body = phi.sub if isinstance(phi, A.ForallSO) else phi
    if budget.so_policy == POOL:
        sort = phi.sort if isinstance(phi, A.ForallSO) else "X"
        return enumerate_relations(sort, s, budget, budget.pool_bound)
    guard = None
    if isinstance(body, A.Not):
        guard = _find_guard(body.sub, var, frozenset())
    if guard is None:
        guard = _find_guard(body, var, frozenset())
    if guard is not None:
        return _guard_family(guard, s, z, budget)
    raise UnboundedQuantifier(
        f"second-order quantifier over {var!r} is not guarded by upd/upm"
    )


def _eval_forall_so(phi: A.ForallSO, s, z, budget) -> bool:
    var, body = phi.var, phi.sub
    if var in budget.so_domains:
        domain = budget.so_domains[var]
    elif budget.so_policy == POOL:
        domain = enumerate_relations(phi.sort, s, budget, budget.pool_bound)
    else:
        if isinstance(body, A.Not) and (g := _find_guard(body.sub, var, frozenset())):
            # forall V not(... upd(r,V) ...): enumerate the family.
            domain = _guard_family(g, s, z, budget)
        elif g := _find_guard(body, var, frozenset()):
            # The body entails membership in a finite family, so it
            # cannot hold for every finite relation.
            _guard_family(g, s, z, budget)
            return False
        else:
            raise UnboundedQuantifier(
                f"second-order quantifier over {var!r} is not guarded by upd/upm"
            )
    for rel in domain:
        z2, b2 = _bind_so(z, budget, var, rel)
        if not eval_formula(body, s, z2, b2):
            return False
    return True


# ---------------------------------------------------------------------------
# Pool-bounded relation enumeration


def row_space(sort: str, sig: Signature, carrier, pool) -> list:
    """All rows of a second-order sort over the given carrier and pool."""
    pool = sorted(pool, key=canon_key)
    carrier = list(carrier)
    if sort == "M":
        return [(a, v) for a in carrier for v in pool]
    rows = []
    for decl in sig.dynamic_functions():
        argss = [tuple(t) for t in itertools.product(carrier, repeat=decl.arity)]
        vals = carrier if decl.kind == DB else pool
        base = [(decl.name, ar, v) for ar in argss for v in vals]
        if sort == "X":
            rows.extend(base)
        elif sort == "Xb":
            rows.extend(b + (c,) for b in base for c in carrier)
        elif sort == "Xm":
            rows.extend(b + (t,) for b in base for t in pool)
        elif sort == "Xmb":
            rows.extend(b + (t, c) for b in base for t in pool for c in carrier)
        elif sort in ("F", "G"):
            last = carrier if sort == "F" else pool
            occ = [b + (t,) for b in base for t in pool]
            rows.extend(
                o1 + o2[1:] + (x,)
                for o1 in occ
                for o2 in occ
                if o1[0] == o2[0]
                for x in last
            )
        else:
            raise SortError(f"unknown second-order sort {sort!r}")
    return rows


def enumerate_relations(sort: str, s: State, budget: QuantBudget, max_size: int) -> tuple:
    """Every relation of the sort up to max_size rows, canonically ordered."""
    rows = sorted(row_space(sort, s.signature, s.db_carrier, budget.alg_pool), key=canon_key)
    out = []
    for size in range(0, max_size + 1):
        for combo in itertools.combinations(rows, size):
            out.append(frozenset(combo))
    return tuple(out)


def eval_pure(phi, s: State, z: Valuation = None, budget=None) -> bool:
    """Evaluate a pure formula (guards, machine predicates)."""
    if not A.is_pure(phi):
        raise SortError("expected a pure formula")
    return eval_formula(phi, s, z, budget)
