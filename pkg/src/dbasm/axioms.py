"""Randomized semantic validity checks for the axiom suite.

Every schema is checked by instantiating random (state, rule,
candidate-relation) triples at desk scale and comparing both sides of
the axiom. Quantified sides are evaluated through the formula
evaluator wherever the guarded policy admits them; the combinatorial
sides (branch encodings of forall, occurrence bijections of the
multiset axioms) are checked by direct construction over the finite
families, which is equivalent on finite instances and exponentially
cheaper than enumerating all relations.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable

import itertools

from . import ast as A
from .derived import box, con, con_uset, joinable, rules_equivalent, scon, wcon
from .errors import GenerationExhausted
from .evaluator import eval_formula, rel_alg_values, rel_of_update_set, to_update_set
from .gen import (
    GEN_SIG,
    budget_for,
    inconsistent_candidate,
    rand_assign,
    rand_det_rule,
    rand_pure_formula,
    rand_rule,
    rand_state,
    rand_static_pure_formula,
    x_candidates,
    xm_candidates,
)
from .semantics import collapse_let, update_multisets, update_sets
from .state import (
    ALG,
    DB,
    AlgNum,
    Location,
    UpdateMultiset,
    Valuation,
    is_consistent,
    tag_multiset,
    untag,
)

SIG = GEN_SIG
X, Y1, Y2, V, W1, W2 = "X", "Y1", "Y2", "V", "W1", "W2"


# ---------------------------------------------------------------------------
# Formula-building helpers


def _value_var(fname, stem):
    return (A.DbVar if SIG.value_sort(fname) == DB else A.AlgVar)(stem)


def _quant_value(fname, var, body, exists=False):
    if SIG.value_sort(fname) == DB:
        return A.ExistsDb(var.name, body) if exists else A.ForallDb(var.name, body)
    return A.ExistsAlg(var.name, body) if exists else A.ForallAlg(var.name, body)


def _forall_args(names, body):
    for n in reversed(names):
        body = A.ForallDb(n, body)
    return body


def _per_function(mk) -> A.Formula:
    return A.big_and(mk(decl) for decl in SIG.dynamic_functions())


def empty_x(xvar: str) -> A.Formula:
    def clause(decl):
        argnames = [f"ea{i}" for i in range(decl.arity)]
        y = _value_var(decl.name, "ey")
        atom = A.SOAtom(xvar, "X", decl.name, tuple(A.DbVar(n) for n in argnames) + (y,))
        return _forall_args(argnames, _quant_value(decl.name, y, A.Not(atom)))

    return _per_function(clause)


def empty_xm(mvar: str) -> A.Formula:
    def clause(decl):
        argnames = [f"ma{i}" for i in range(decl.arity)]
        y = _value_var(decl.name, "my")
        t = A.AlgVar("mt")
        atom = A.SOAtom(
            mvar, "Xm", decl.name, tuple(A.DbVar(n) for n in argnames) + (y, t)
        )
        return _forall_args(
            argnames, _quant_value(decl.name, y, A.ForallAlg("mt", A.Not(atom)))
        )

    return _per_function(clause)


def x_pointwise(xvar: str, mk_rhs) -> A.Formula:
    """/\\_f forall args,val (X(f,args,val) <-> rhs(f, args, val))."""

    def clause(decl):
        argnames = [f"ba{i}" for i in range(decl.arity)]
        args = tuple(A.DbVar(n) for n in argnames)
        y = _value_var(decl.name, "bv")
        atom = A.SOAtom(xvar, "X", decl.name, args + (y,))
        body = A.Iff(atom, mk_rhs(decl, args, y))
        return _forall_args(argnames, _quant_value(decl.name, y, body))

    return _per_function(clause)


def u1_rhs(r: A.Assign, xvar: str) -> A.Formula:
    head = A.SOAtom(xvar, "X", r.fname, r.args + (r.rhs,))

    def only(decl, args, y):
        if decl.name != r.fname:
            return A.FalseF()
        eqs = [A.Eq(a, t) for a, t in zip(args, r.args)]
        eqs.append(A.Eq(y, r.rhs))
        return A.big_and(eqs)

    return A.And(head, x_pointwise(xvar, only))


def u4_rhs(r: A.Par) -> A.Formula:
    bicond = x_pointwise(
        X,
        lambda decl, args, y: A.Or(
            A.SOAtom(Y1, "X", decl.name, args + (y,)),
            A.SOAtom(Y2, "X", decl.name, args + (y,)),
        ),
    )
    inner = A.And(A.And(A.Upd(r.left, Y1), A.Upd(r.right, Y2)), bicond)
    return A.ExistsSO(Y1, "X", A.ExistsSO(Y2, "X", inner))


def u6_rhs(r: A.Seq) -> A.Formula:
    incons = A.And(A.Upd(r.first, X), A.Not(con_uset(X, SIG)))

    def merged(decl, args, y):
        z = _value_var(decl.name, "sz")
        no_y2 = _quant_value(
            decl.name, z, A.Not(A.SOAtom(Y2, "X", decl.name, args + (z,)))
        )
        keep_y1 = A.And(A.SOAtom(Y1, "X", decl.name, args + (y,)), no_y2)
        return A.Or(keep_y1, A.SOAtom(Y2, "X", decl.name, args + (y,)))

    chained = A.ExistsSO(
        Y1,
        "X",
        A.And(
            A.And(A.Upd(r.first, Y1), con_uset(Y1, SIG)),
            A.ExistsSO(Y2, "X", A.And(A.Modal(Y1, A.Upd(r.second, Y2)), x_pointwise(X, merged))),
        ),
    )
    return A.Or(incons, chained)


def um1_rhs(r: A.Assign, mvar: str) -> A.Formula:
    t1, t2 = A.AlgVar("z1"), A.AlgVar("z2")
    head = A.SOAtom(mvar, "Xm", r.fname, r.args + (r.rhs, t1))

    def only(decl):
        argnames = [f"ua{i}" for i in range(decl.arity)]
        args = tuple(A.DbVar(n) for n in argnames)
        y = _value_var(decl.name, "uy")
        atom = A.SOAtom(mvar, "Xm", decl.name, args + (y, t2))
        if decl.name != r.fname:
            rhs = A.FalseF()
        else:
            eqs = [A.Eq(a, t) for a, t in zip(args, r.args)]
            eqs.append(A.Eq(y, r.rhs))
            eqs.append(A.Eq(t1, t2))
            rhs = A.big_and(eqs)
        inner = A.Implies(atom, rhs)
        return _forall_args(
            argnames, _quant_value(decl.name, y, A.ForallAlg(t2.name, inner))
        )

    return A.ExistsAlg(t1.name, A.And(head, _per_function(only)))


# ---------------------------------------------------------------------------
# Evaluation helpers


def _bind(base_z, budget, **rels):
    z, b = base_z, budget
    for name, rel in rels.items():
        z = z.bind_so(name, rel)
        b = b.with_values(rel_alg_values(rel))
    return z, b


def _ev(phi, s, z, b) -> bool:
    return eval_formula(phi, s, z, b)


def _counterexample(label, state, extra=""):
    entries = ", ".join(f"{f}({','.join(map(str, a))})={v}" for f, a, v in state.non_default_entries())
    return f"{label}; state [{entries}] {extra}".strip()


def _fmt_rule(r):
    from .printer import fmt_rule

    return fmt_rule(r)


# ---------------------------------------------------------------------------
# Occurrence bijections (UM3 / UM4)


def occurrence_groups(rel) -> dict:
    groups = {}
    for f, args, v, tag in rel:
        groups.setdefault((f, args, v), set()).add(tag)
    return groups


def is_occurrence_bijection(pairs, src_rel, tgt_rows) -> bool:
    """pairs maps source occurrences to target occurrences; checks
    totality, functionality, injectivity and surjectivity, and that the
    paired occurrences carry the same update."""
    src = set(src_rel)
    tgt = set(tgt_rows)
    dom = {p[0] for p in pairs}
    rng_ = {p[1] for p in pairs}
    if dom != src or rng_ != tgt:
        return False
    if len({p[0] for p in pairs}) != len(pairs) or len({p[1] for p in pairs}) != len(pairs):
        return False
    for (f, args, v, _), tgt_occ in pairs:
        if (tgt_occ[0], tgt_occ[1], tgt_occ[2]) != (f, args, v):
            return False
    return True


def build_occurrence_bijection(src_rel, tgt_rows):
    """Canonical pairing of equal-multiset occurrence sets, grouped per
    update; None when the multisets differ."""
    from .state import canon_key

    by_update_src = {}
    for row in src_rel:
        by_update_src.setdefault((row[0], row[1], row[2]), []).append(row)
    by_update_tgt = {}
    for row in tgt_rows:
        by_update_tgt.setdefault((row[0], row[1], row[2]), []).append(row)
    if set(by_update_src) != set(by_update_tgt):
        return None
    pairs = []
    for key, srcs in by_update_src.items():
        tgts = by_update_tgt[key]
        if len(srcs) != len(tgts):
            return None
        srcs = sorted(srcs, key=lambda r: canon_key(r[3]))
        tgts = sorted(tgts, key=repr)
        pairs.extend(zip(srcs, tgts))
    return pairs


# ---------------------------------------------------------------------------
# Schema registry


@dataclass
class Schema:
    name: str
    suite: str
    description: str
    trial: Callable[[random.Random], str | None]


@dataclass
class CheckReport:
    name: str
    trials: int = 0
    passed: int = 0
    failed: int = 0
    counterexamples: list = field(default_factory=list)
    seed: int = 0

    @property
    def ok(self) -> bool:
        return self.failed == 0


def check_schema(schema: Schema, trials: int = 200, seed: int = 0) -> CheckReport:
    """Run `trials` randomized instantiations; each trial is replayable
    from (schema name, seed, index)."""
    report = CheckReport(schema.name, seed=seed)
    for i in range(trials):
        rng = random.Random(f"{seed}:{schema.name}:{i}")
        try:
            message = schema.trial(rng)
        except GenerationExhausted:
            continue
        report.trials += 1
        if message is None:
            report.passed += 1
        else:
            report.failed += 1
            report.counterexamples.append((i, f"{seed}:{schema.name}:{i}", message))
    return report


_REGISTRY: list[Schema] = []


def schema(name, suite, description):
    def register(fn):
        _REGISTRY.append(Schema(name, suite, description, fn))
        return fn

    return register


def all_schemas() -> tuple[Schema, ...]:
    return tuple(_REGISTRY)


def schemas_in_suite(suite: str) -> tuple[Schema, ...]:
    return tuple(s for s in _REGISTRY if s.suite == suite)


def suites() -> tuple[str, ...]:
    return tuple(dict.fromkeys(s.suite for s in _REGISTRY))


# ---------------------------------------------------------------------------
# upd axioms


def _fresh_ctx(rng, **rule_kw):
    s = rand_state(rng)
    return s, budget_for(s)


@schema("U1", "U", "assignment yields exactly its single update")
def _u1(rng):
    s, budget = _fresh_ctx(rng)
    r = rand_assign(rng, [])
    rhs = u1_rhs(r, X)
    for cand in x_candidates(rng, r, s, budget):
        z, b = _bind(Valuation(), budget, X=cand)
        if _ev(A.Upd(r, X), s, z, b) != _ev(rhs, s, z, b):
            return _counterexample(f"U1 {_fmt_rule(r)} X={sorted(cand, key=repr)}", s)
    return None


@schema("U2", "U", "conditional yields the branch family or the empty set")
def _u2(rng):
    s, budget = _fresh_ctx(rng)
    r = A.If(rand_pure_formula(rng, [], 1), rand_rule(rng, 2))
    rhs = A.Or(A.And(r.guard, A.Upd(r.rule, X)), A.And(A.Not(r.guard), empty_x(X)))
    cands = x_candidates(rng, r, s, budget) + x_candidates(rng, r.rule, s, budget, n_extra=1)
    for cand in cands:
        z, b = _bind(Valuation(), budget, X=cand)
        if _ev(A.Upd(r, X), s, z, b) != _ev(rhs, s, z, b):
            return _counterexample(f"U2 {_fmt_rule(r)} X={sorted(cand, key=repr)}", s)
    return None


@schema("U3", "U", "forall yields exactly the unions of per-witness choices")
def _u3(rng):
    s, budget = _fresh_ctx(rng)
    var = "ux"
    guard = rand_pure_formula(rng, [var], 1)
    body = rand_rule(rng, 2, scope=[var], choose_budget=1)
    r = A.ForallRule(var, guard, body)
    witnesses = [
        a for a in s.db_carrier if _ev(guard, s, Valuation().bind_db(var, a), budget)
    ]
    branch_fams = [
        list(update_sets(body, s, Valuation().bind_db(var, a), budget)) for a in witnesses
    ]
    unions = set()
    for pick in itertools.product(*branch_fams):
        merged = frozenset().union(*[d.updates for d in pick]) if pick else frozenset()
        unions.add(frozenset(merged))
    fam = update_sets(r, s, Valuation(), budget)
    for cand in x_candidates(rng, r, s, budget):
        z, b = _bind(Valuation(), budget, X=cand)
        lhs = _ev(A.Upd(r, X), s, z, b)
        delta = to_update_set(cand, SIG)
        rhs = delta is not None and frozenset(delta.updates) in unions
        if lhs != rhs:
            return _counterexample(f"U3 {_fmt_rule(r)} X={sorted(cand, key=repr)}", s)
    if {frozenset(d.updates) for d in fam} != unions:
        return _counterexample(f"U3 family mismatch {_fmt_rule(r)}", s)
    return None


@schema("U4", "U", "parallel composition unions one choice from each side")
def _u4(rng):
    s, budget = _fresh_ctx(rng)
    r = A.Par(rand_rule(rng, 2, choose_budget=1), rand_rule(rng, 2, choose_budget=1))
    rhs = u4_rhs(r)
    for cand in x_candidates(rng, r, s, budget):
        z, b = _bind(Valuation(), budget, X=cand)
        if _ev(A.Upd(r, X), s, z, b) != _ev(rhs, s, z, b):
            return _counterexample(f"U4 {_fmt_rule(r)} X={sorted(cand, key=repr)}", s)
    return None


@schema("U5", "U", "choice yields some witness's family")
def _u5(rng):
    s, budget = _fresh_ctx(rng)
    var = "cx"
    r = A.Choose(var, rand_pure_formula(rng, [var], 1), rand_rule(rng, 2, scope=[var]))
    rhs = A.ExistsDb(var, A.And(r.guard, A.Upd(r.rule, X)))
    for cand in x_candidates(rng, r, s, budget):
        z, b = _bind(Valuation(), budget, X=cand)
        if _ev(A.Upd(r, X), s, z, b) != _ev(rhs, s, z, b):
            return _counterexample(f"U5 {_fmt_rule(r)} X={sorted(cand, key=repr)}", s)
    return None


@schema("U6", "U", "sequence keeps inconsistent first stages or merges per location")
def _u6(rng):
    s, budget = _fresh_ctx(rng)
    r = A.Seq(rand_rule(rng, 2, choose_budget=1), rand_rule(rng, 2, choose_budget=1))
    rhs = u6_rhs(r)
    for cand in x_candidates(rng, r, s, budget):
        z, b = _bind(Valuation(), budget, X=cand)
        if _ev(A.Upd(r, X), s, z, b) != _ev(rhs, s, z, b):
            return _counterexample(f"U6 {_fmt_rule(r)} X={sorted(cand, key=repr)}", s)
    return None


@schema("U7", "U", "let collapses the designated location of each multiset")
def _u7(rng):
    s, budget = _fresh_ctx(rng)
    if rng.random() < 0.5:
        r = A.Let("q", (), rng.choice(list(SIG.location_operators)), rand_rule(rng, 2))
    else:
        r = A.Let("p", (A.Apply("a", ()),), rng.choice(list(SIG.location_operators)), rand_rule(rng, 2))
    from .evaluator import eval_term

    loc = Location(r.fname, tuple(eval_term(t, s, Valuation(), budget) for t in r.args))
    expected = {
        rel_of_update_set(collapse_let(m, loc, r.op)[0])
        for m in update_multisets(r.rule, s, Valuation(), budget)
    }
    for cand in x_candidates(rng, r, s, budget):
        z, b = _bind(Valuation(), budget, X=cand)
        lhs = _ev(A.Upd(r, X), s, z, b)
        if lhs != (cand in expected):
            return _counterexample(f"U7 {_fmt_rule(r)} X={sorted(cand, key=repr)}", s)
    return None


# ---------------------------------------------------------------------------
# upm axioms


@schema("UM1", "UM", "assignment yields its update once")
def _um1(rng):
    s, budget = _fresh_ctx(rng)
    r = rand_assign(rng, [])
    rhs = um1_rhs(r, V)
    for cand in xm_candidates(rng, r, s, budget):
        z, b = _bind(Valuation(), budget, V=cand)
        if _ev(A.Upm(r, V), s, z, b) != _ev(rhs, s, z, b):
            return _counterexample(f"UM1 {_fmt_rule(r)} V={sorted(cand, key=repr)}", s)
    return None


@schema("UM2", "UM", "conditional multisets mirror the guard")
def _um2(rng):
    s, budget = _fresh_ctx(rng)
    r = A.If(rand_pure_formula(rng, [], 1), rand_rule(rng, 2))
    rhs = A.Or(A.And(r.guard, A.Upm(r.rule, V)), A.And(A.Not(r.guard), empty_xm(V)))
    for cand in xm_candidates(rng, r, s, budget):
        z, b = _bind(Valuation(), budget, V=cand)
        if _ev(A.Upm(r, V), s, z, b) != _ev(rhs, s, z, b):
            return _counterexample(f"UM2 {_fmt_rule(r)} V={sorted(cand, key=repr)}", s)
    return None


@schema("UM3", "UM", "forall multisets are per-witness sums, up to occurrence bijection")
def _um3(rng):
    s, budget = _fresh_ctx(rng)
    var = "ux"
    guard = rand_pure_formula(rng, [var], 1)
    body = rand_rule(rng, 2, scope=[var], choose_budget=1)
    r = A.ForallRule(var, guard, body)
    witnesses = [
        a for a in s.db_carrier if _ev(guard, s, Valuation().bind_db(var, a), budget)
    ]
    branch_fams = [
        list(update_multisets(body, s, Valuation().bind_db(var, a), budget))
        for a in witnesses
    ]
    sums = {}
    for pick in itertools.product(*branch_fams):
        total = UpdateMultiset()
        for m in pick:
            total = total.msum(m)
        sums.setdefault(total, pick)
    for cand in xm_candidates(rng, r, s, budget):
        z, b = _bind(Valuation(), budget, V=cand)
        lhs = _ev(A.Upm(r, V), s, z, b)
        decoded = untag(cand) if all(len(row) == 4 for row in cand) else None
        rhs = decoded in sums if decoded is not None else False
        if lhs != rhs:
            return _counterexample(f"UM3 {_fmt_rule(r)} V={sorted(cand, key=repr)}", s)
        if lhs and decoded in sums:
            # the branch encoding admits an occurrence bijection
            pick = sums[decoded]
            tgt_rows = []
            for a, m in zip(witnesses, pick):
                tgt_rows.extend(row + (a,) for row in tag_multiset(m))
            pairs = build_occurrence_bijection(cand, tgt_rows)
            if pairs is None or not is_occurrence_bijection(pairs, cand, tgt_rows):
                return _counterexample(f"UM3 bijection failure {_fmt_rule(r)}", s)
    return None


@schema("UM4", "UM", "parallel multisets sum occurrences, up to bijection")
def _um4(rng):
    s, budget = _fresh_ctx(rng)
    r = A.Par(rand_rule(rng, 2, choose_budget=1), rand_rule(rng, 2, choose_budget=1))
    fam1 = list(update_multisets(r.left, s, Valuation(), budget))
    fam2 = list(update_multisets(r.right, s, Valuation(), budget))
    sums = {}
    for m1 in fam1:
        for m2 in fam2:
            sums.setdefault(m1.msum(m2), (m1, m2))
    for cand in xm_candidates(rng, r, s, budget):
        z, b = _bind(Valuation(), budget, V=cand)
        lhs = _ev(A.Upm(r, V), s, z, b)
        decoded = untag(cand) if all(len(row) == 4 for row in cand) else None
        rhs = decoded in sums if decoded is not None else False
        if lhs != rhs:
            return _counterexample(f"UM4 {_fmt_rule(r)} V={sorted(cand, key=repr)}", s)
        if lhs:
            m1, m2 = sums[decoded]
            tgt_rows = [row + (AlgNum(0),) for row in tag_multiset(m1)]
            tgt_rows += [row + (AlgNum(1),) for row in tag_multiset(m2)]
            pairs = build_occurrence_bijection(cand, tgt_rows)
            if pairs is None or not is_occurrence_bijection(pairs, cand, tgt_rows):
                return _counterexample(f"UM4 bijection failure {_fmt_rule(r)}", s)
    return None


@schema("UM5", "UM", "choice multisets come from some witness")
def _um5(rng):
    s, budget = _fresh_ctx(rng)
    var = "cx"
    r = A.Choose(var, rand_pure_formula(rng, [var], 1), rand_rule(rng, 2, scope=[var]))
    rhs = A.ExistsDb(var, A.And(r.guard, A.Upm(r.rule, V)))
    for cand in xm_candidates(rng, r, s, budget):
        z, b = _bind(Valuation(), budget, V=cand)
        if _ev(A.Upm(r, V), s, z, b) != _ev(rhs, s, z, b):
            return _counterexample(f"UM5 {_fmt_rule(r)} V={sorted(cand, key=repr)}", s)
    return None


@schema("UM6", "UM", "sequence multisets keep inconsistent stages or merge per location")
def _um6(rng):
    s, budget = _fresh_ctx(rng)
    r = A.Seq(rand_rule(rng, 2, choose_budget=1), rand_rule(rng, 2, choose_budget=1))
    from .semantics import seq_merge_multiset
    from .state import apply

    expected = set()
    for m1 in update_multisets(r.first, s, Valuation(), budget):
        d1 = m1.support()
        if not is_consistent(d1):
            expected.add(m1)
            continue
        for m2 in update_multisets(r.second, apply(s, d1), Valuation(), budget):
            expected.add(seq_merge_multiset(m1, m2))
    for cand in xm_candidates(rng, r, s, budget):
        z, b = _bind(Valuation(), budget, V=cand)
        lhs = _ev(A.Upm(r, V), s, z, b)
        decoded = untag(cand) if all(len(row) == 4 for row in cand) else None
        rhs = decoded in expected if decoded is not None else False
        if lhs != rhs:
            return _counterexample(f"UM6 {_fmt_rule(r)} V={sorted(cand, key=repr)}", s)
    return None


@schema("UM7", "UM", "let multisets collapse the designated location to one update")
def _um7(rng):
    s, budget = _fresh_ctx(rng)
    if rng.random() < 0.5:
        r = A.Let("q", (), rng.choice(list(SIG.location_operators)), rand_rule(rng, 2))
    else:
        r = A.Let("p", (A.Apply("b", ()),), rng.choice(list(SIG.location_operators)), rand_rule(rng, 2))
    from .evaluator import eval_term

    loc = Location(r.fname, tuple(eval_term(t, s, Valuation(), budget) for t in r.args))
    expected = {
        collapse_let(m, loc, r.op)[1]
        for m in update_multisets(r.rule, s, Valuation(), budget)
    }
    for cand in xm_candidates(rng, r, s, budget):
        z, b = _bind(Valuation(), budget, V=cand)
        lhs = _ev(A.Upm(r, V), s, z, b)
        decoded = untag(cand) if all(len(row) == 4 for row in cand) else None
        rhs = decoded in expected if decoded is not None else False
        if lhs != rhs:
            return _counterexample(f"UM7 {_fmt_rule(r)} V={sorted(cand, key=repr)}", s)
    return None


# ---------------------------------------------------------------------------
# Modal axioms and the A-group


def _rand_xrels(rng, s, budget, n=4):
    r = rand_rule(rng, 2, choose_budget=1)
    cands = x_candidates(rng, r, s, budget, n_extra=2)
    cands.append(inconsistent_candidate(rng, s))
    rng.shuffle(cands)
    return r, cands[:n]


@schema("M1", "M", "the modal operator distributes over implication")
def _m1(rng):
    s, budget = _fresh_ctx(rng)
    _, cands = _rand_xrels(rng, s, budget)
    phi = rand_pure_formula(rng, [], 2)
    psi = rand_pure_formula(rng, [], 2)
    law = A.Implies(
        A.Modal(X, A.Implies(phi, psi)), A.Implies(A.Modal(X, phi), A.Modal(X, psi))
    )
    for cand in cands:
        z, b = _bind(Valuation(), budget, X=cand)
        if not _ev(law, s, z, b):
            return _counterexample(f"M1 X={sorted(cand, key=repr)}", s)
    return None


@schema("M4", "M", "an inconsistent update set satisfies every modal formula")
def _m4(rng):
    s, budget = _fresh_ctx(rng)
    _, cands = _rand_xrels(rng, s, budget)
    cands.append(inconsistent_candidate(rng, s))
    phi = rand_pure_formula(rng, [], 2)
    law = A.Implies(A.Not(con_uset(X, SIG)), A.Modal(X, phi))
    for cand in cands:
        z, b = _bind(Valuation(), budget, X=cand)
        if not _ev(law, s, z, b):
            return _counterexample(f"M4 X={sorted(cand, key=repr)}", s)
    return None


@schema("M5", "M", "applying a consistent update set is deterministic")
def _m5(rng):
    s, budget = _fresh_ctx(rng)
    _, cands = _rand_xrels(rng, s, budget)
    phi = rand_pure_formula(rng, [], 2)
    law = A.Implies(A.Not(A.Modal(X, phi)), A.Modal(X, A.Not(phi)))
    for cand in cands:
        z, b = _bind(Valuation(), budget, X=cand)
        if not _ev(law, s, z, b):
            return _counterexample(f"M5 X={sorted(cand, key=repr)}", s)
    return None


@schema("M6", "M", "quantifiers commute with the modal operator (shared carrier)")
def _m6(rng):
    s, budget = _fresh_ctx(rng)
    _, cands = _rand_xrels(rng, s, budget)
    phi = rand_pure_formula(rng, ["mx"], 2)
    law = A.Implies(A.ForallDb("mx", A.Modal(X, phi)), A.Modal(X, A.ForallDb("mx", phi)))
    for cand in cands:
        z, b = _bind(Valuation(), budget, X=cand)
        if not _ev(law, s, z, b):
            return _counterexample(f"M6 X={sorted(cand, key=repr)}", s)
    return None


@schema("M7", "M", "static pure truths survive every consistent yielded step")
def _m7(rng):
    s, budget = _fresh_ctx(rng)
    r = rand_rule(rng, 2, choose_budget=1)
    phi = rand_static_pure_formula(rng, 2)
    law = A.Implies(A.And(con(r, X, SIG), phi), A.Modal(X, phi))
    for cand in x_candidates(rng, r, s, budget):
        z, b = _bind(Valuation(), budget, X=cand)
        if not _ev(law, s, z, b):
            return _counterexample(f"M7 {_fmt_rule(r)} X={sorted(cand, key=repr)}", s)
    return None


@schema("M8", "M", "static pure truths reflect back from every consistent step")
def _m8(rng):
    s, budget = _fresh_ctx(rng)
    r = rand_rule(rng, 2, choose_budget=1)
    phi = rand_static_pure_formula(rng, 2)
    law = A.Implies(A.And(con(r, X, SIG), A.Modal(X, phi)), phi)
    for cand in x_candidates(rng, r, s, budget):
        z, b = _bind(Valuation(), budget, X=cand)
        if not _ev(law, s, z, b):
            return _counterexample(f"M8 {_fmt_rule(r)} X={sorted(cand, key=repr)}", s)
    return None


def _location_instance(rng, s):
    decl = rng.choice(SIG.dynamic_functions())
    args = tuple(rng.choice(s.db_carrier) for _ in range(decl.arity))
    return decl, args


@schema("A1", "A", "untouched locations keep their content across a step")
def _a1(rng):
    s, budget = _fresh_ctx(rng)
    _, cands = _rand_xrels(rng, s, budget)
    decl, args = _location_instance(rng, s)
    argnames = [f"ia{i}" for i in range(decl.arity)]
    argterms = tuple(A.DbVar(n) for n in argnames)
    yv = _value_var(decl.name, "iy")
    zv = _value_var(decl.name, "iz")
    app = A.Apply(decl.name, argterms)
    no_update = _quant_value(
        decl.name, zv, A.Not(A.SOAtom(X, "X", decl.name, argterms + (zv,)))
    )
    law = A.Implies(
        A.And(A.And(con_uset(X, SIG), no_update), A.Eq(app, yv)),
        A.Modal(X, A.Eq(app, yv)),
    )
    z = Valuation()
    for n, a in zip(argnames, args):
        z = z.bind_db(n, a)
    current = s.raw_lookup(decl.name, args)
    z = z.bind_db(yv.name, current) if SIG.value_sort(decl.name) == DB else z.bind_alg(yv.name, current)
    for cand in cands:
        z2, b = _bind(z, budget, X=cand)
        if not _ev(law, s, z2, b):
            return _counterexample(f"A1 {decl.name}{args} X={sorted(cand, key=repr)}", s)
    return None


@schema("A2", "A", "updated locations take their assigned value across a step")
def _a2(rng):
    s, budget = _fresh_ctx(rng)
    _, cands = _rand_xrels(rng, s, budget)
    decl, args = _location_instance(rng, s)
    argnames = [f"ja{i}" for i in range(decl.arity)]
    argterms = tuple(A.DbVar(n) for n in argnames)
    yv = _value_var(decl.name, "jy")
    app = A.Apply(decl.name, argterms)
    law = A.Implies(
        A.And(con_uset(X, SIG), A.SOAtom(X, "X", decl.name, argterms + (yv,))),
        A.Modal(X, A.Eq(app, yv)),
    )
    for cand in cands:
        rows = [row for row in cand if row[0] == decl.name]
        if rows:
            row = rng.choice(sorted(rows, key=repr))
            bind_args, bind_y = row[1], row[2]
        else:
            bind_args = args
            bind_y = s.raw_lookup(decl.name, args)
        z = Valuation()
        for n, a in zip(argnames, bind_args):
            z = z.bind_db(n, a)
        z = (
            z.bind_db(yv.name, bind_y)
            if SIG.value_sort(decl.name) == DB
            else z.bind_alg(yv.name, bind_y)
        )
        z2, b = _bind(z, budget, X=cand)
        if not _ev(law, s, z2, b):
            return _counterexample(f"A2 {decl.name} X={sorted(cand, key=repr)}", s)
    return None


@schema("A3", "A", "a rule with an update multiset also yields an update set")
def _a3(rng):
    s, budget = _fresh_ctx(rng)
    r = rand_rule(rng, 3)
    multisets = update_multisets(r, s, Valuation(), budget)
    sets = update_sets(r, s, Valuation(), budget)
    for m in multisets:
        z, b = _bind(Valuation(), budget, V=tag_multiset(m))
        if _ev(A.Upm(r, V), s, z, b) and not len(sets):
            return _counterexample(f"A3 {_fmt_rule(r)}", s)
    return None


@schema("DY1", "DY", "sequential composition equals consecutive execution")
def _dy1(rng):
    s, budget = _fresh_ctx(rng)
    r = A.Seq(rand_rule(rng, 2, choose_budget=1), rand_rule(rng, 2, choose_budget=1))
    phi = rand_pure_formula(rng, [], 2)
    lhs = A.ExistsSO(X, "X", A.And(A.Upd(r, X), A.Modal(X, phi)))
    rhs = A.ExistsSO(
        "X1",
        "X",
        A.And(
            A.Upd(r.first, "X1"),
            A.Modal(
                "X1",
                A.ExistsSO("X2", "X", A.And(A.Upd(r.second, "X2"), A.Modal("X2", phi))),
            ),
        ),
    )
    if _ev(lhs, s, Valuation(), budget) != _ev(rhs, s, Valuation(), budget):
        return _counterexample(f"DY1 {_fmt_rule(r)}", s)
    return None


def _rearranged(rng, r):
    """An equivalent syntactic rearrangement: commuted par or
    reassociated seq somewhere in the rule, when present."""

    def rewrite(node):
        if isinstance(node, A.Par):
            if rng.random() < 0.5:
                return A.Par(node.right, node.left)
            return A.Par(rewrite(node.left), node.right)
        if isinstance(node, A.Seq):
            if isinstance(node.second, A.Seq) and rng.random() < 0.5:
                # r1 ; (r2 ; r3)  ->  (r1 ; r2) ; r3
                return A.Seq(A.Seq(node.first, node.second.first), node.second.second)
            return A.Seq(rewrite(node.first), node.second)
        if isinstance(node, (A.If, A.ForallRule, A.Choose)):
            return type(node)(*(
                (node.guard, rewrite(node.rule))
                if isinstance(node, A.If)
                else (node.var, node.guard, rewrite(node.rule))
            ))
        if isinstance(node, A.Let):
            return A.Let(node.fname, node.args, node.op, rewrite(node.rule))
        return node

    return rewrite(r)


@schema("E", "E", "equivalent rules admit matching boxed witnesses")
def _e(rng):
    s, budget = _fresh_ctx(rng)
    r1 = rand_rule(rng, 3, choose_budget=1)
    r2 = _rearranged(rng, r1)
    if not rules_equivalent(r1, r2, s):
        return _counterexample(f"E rearrangement not equivalent {_fmt_rule(r1)}", s)
    phi = rand_pure_formula(rng, [], 2)
    fam1 = [rel_of_update_set(d) for d in update_sets(r1, s, Valuation(), budget)]
    fam2 = [rel_of_update_set(d) for d in update_sets(r2, s, Valuation(), budget)]
    junk = inconsistent_candidate(rng, s)
    domain = tuple(fam1 + fam2 + [junk])
    inner = A.Iff(
        A.And(A.Upd(r1, "X1"), A.Modal("X1", phi)),
        A.And(A.Upd(r2, "X2"), A.Modal("X2", phi)),
    )
    rhs = A.ExistsSO("X1", "X", A.ExistsSO("X2", "X", inner))
    b = budget.with_domain("X1", domain).with_domain("X2", domain)
    b = b.with_values(v for rel in domain for v in rel_alg_values(rel))
    if not _ev(rhs, s, Valuation(), b):
        return _counterexample(f"E {_fmt_rule(r1)}", s)
    return None


# ---------------------------------------------------------------------------
# Derived properties of the rule-level modalities (lemma group)


@schema("lemma-a", "lemma", "the boxed rule modality distributes over implication")
def _la(rng):
    s, budget = _fresh_ctx(rng)
    r = rand_rule(rng, 2, choose_budget=1)
    phi = rand_pure_formula(rng, [], 2)
    psi = rand_pure_formula(rng, [], 2)
    law = A.Implies(
        box(r, A.Implies(phi, psi), SIG), A.Implies(box(r, phi, SIG), box(r, psi, SIG))
    )
    if not _ev(law, s, Valuation(), budget):
        return _counterexample(f"lemma-a {_fmt_rule(r)}", s)
    return None


@schema("lemma-b", "lemma", "static pure truths are preserved by every rule")
def _lb(rng):
    s, budget = _fresh_ctx(rng)
    r = rand_rule(rng, 2, choose_budget=1)
    phi = rand_static_pure_formula(rng, 2)
    law = A.Implies(phi, box(r, phi, SIG))
    if not _ev(law, s, Valuation(), budget):
        return _counterexample(f"lemma-b {_fmt_rule(r)}", s)
    return None


@schema("lemma-c", "lemma", "a rule with no consistent yield boxes everything")
def _lc(rng):
    s, budget = _fresh_ctx(rng)
    r = rand_rule(rng, 2, choose_budget=1)
    phi = rand_pure_formula(rng, [], 2)
    law = A.Implies(A.Not(wcon(r, SIG)), box(r, phi, SIG))
    if not _ev(law, s, Valuation(), budget):
        return _counterexample(f"lemma-c {_fmt_rule(r)}", s)
    return None


@schema("lemma-d", "lemma", "box and diamond coincide for defined deterministic rules")
def _ld(rng):
    s, budget = _fresh_ctx(rng)
    for _ in range(8):
        r = rand_det_rule(rng, 2)
        fam = update_sets(r, s, Valuation(), budget)
        if len(fam) and all(is_consistent(d) for d in fam):
            break
    else:
        raise GenerationExhausted("no defined consistent deterministic rule")
    phi = rand_pure_formula(rng, [], 2)
    lhs = _ev(box(r, phi, SIG), s, Valuation(), budget)
    rhs = not _ev(box(r, A.Not(phi), SIG), s, Valuation(), budget)
    if lhs != rhs:
        return _counterexample(f"lemma-d {_fmt_rule(r)}", s)
    return None


@schema("lemma-e", "lemma", "a boxed location equation traces back to the update set")
def _le(rng):
    s, budget = _fresh_ctx(rng)
    r = rand_rule(rng, 2, choose_budget=1)
    decl, args = _location_instance(rng, s)
    argnames = [f"la{i}" for i in range(decl.arity)]
    argterms = tuple(A.DbVar(n) for n in argnames)
    yv = _value_var(decl.name, "ly")
    zv = _value_var(decl.name, "lz")
    app = A.Apply(decl.name, argterms)
    law = A.Implies(
        A.And(con(r, X, SIG), A.Modal(X, A.Eq(app, yv))),
        A.Or(
            A.SOAtom(X, "X", decl.name, argterms + (yv,)),
            A.And(
                _quant_value(decl.name, zv, A.Not(A.SOAtom(X, "X", decl.name, argterms + (zv,)))),
                A.Eq(app, yv),
            ),
        ),
    )
    for cand in x_candidates(rng, r, s, budget, n_extra=2):
        for bind_y in _value_samples(rng, s, decl, cand):
            z = Valuation()
            for n, a in zip(argnames, args):
                z = z.bind_db(n, a)
            z = (
                z.bind_db(yv.name, bind_y)
                if SIG.value_sort(decl.name) == DB
                else z.bind_alg(yv.name, bind_y)
            )
            z2, b = _bind(z, budget, X=cand)
            if not _ev(law, s, z2, b):
                return _counterexample(f"lemma-e {decl.name}{args} y={bind_y}", s)
    return None


def _value_samples(rng, s, decl, cand):
    vals = [row[2] for row in cand if row[0] == decl.name]
    vals.append(s.raw_lookup(decl.name, tuple(rng.choice(s.db_carrier) for _ in range(decl.arity))))
    if SIG.value_sort(decl.name) == DB:
        vals.append(rng.choice(s.db_carrier))
    else:
        vals.append(AlgNum(rng.randint(0, 9)))
    return vals[:3]


@schema("lemma-f", "lemma", "consistent steps never satisfy both a formula and its negation")
def _lf(rng):
    s, budget = _fresh_ctx(rng)
    r = rand_rule(rng, 2, choose_budget=1)
    phi = rand_pure_formula(rng, [], 2)
    law = A.Implies(A.And(con(r, X, SIG), A.Modal(X, phi)), A.Not(A.Modal(X, A.Not(phi))))
    for cand in x_candidates(rng, r, s, budget):
        z, b = _bind(Valuation(), budget, X=cand)
        if not _ev(law, s, z, b):
            return _counterexample(f"lemma-f {_fmt_rule(r)}", s)
    return None


@schema("lemma-g", "lemma", "an existential under the modal yields a modal witness")
def _lg(rng):
    s, budget = _fresh_ctx(rng)
    _, cands = _rand_xrels(rng, s, budget)
    phi = rand_pure_formula(rng, ["gx"], 2)
    law = A.Implies(
        A.Modal(X, A.ExistsDb("gx", phi)), A.ExistsDb("gx", A.Modal(X, phi))
    )
    for cand in cands:
        z, b = _bind(Valuation(), budget, X=cand)
        if not _ev(law, s, z, b):
            return _counterexample(f"lemma-g X={sorted(cand, key=repr)}", s)
    return None


@schema("lemma-h", "lemma", "boxed conjuncts combine under one modal")
def _lh(rng):
    s, budget = _fresh_ctx(rng)
    _, cands = _rand_xrels(rng, s, budget)
    p1 = rand_pure_formula(rng, [], 2)
    p2 = rand_pure_formula(rng, [], 2)
    law = A.Implies(
        A.And(A.Modal(X, p1), A.Modal(X, p2)), A.Modal(X, A.And(p1, p2))
    )
    for cand in cands:
        z, b = _bind(Valuation(), budget, X=cand)
        if not _ev(law, s, z, b):
            return _counterexample(f"lemma-h X={sorted(cand, key=repr)}", s)
    return None


# ---------------------------------------------------------------------------
# Weak-consistency laws


@schema("wcon-i", "wcon", "assignments are weakly consistent")
def _wi(rng):
    s, budget = _fresh_ctx(rng)
    r = rand_assign(rng, [])
    if not _ev(wcon(r, SIG), s, Valuation(), budget):
        return _counterexample(f"wcon-i {_fmt_rule(r)}", s)
    return None


@schema("wcon-j", "wcon", "conditional weak consistency follows the guard")
def _wj(rng):
    s, budget = _fresh_ctx(rng)
    r = A.If(rand_pure_formula(rng, [], 1), rand_rule(rng, 2, choose_budget=1))
    lhs = _ev(wcon(r, SIG), s, Valuation(), budget)
    rhs = _ev(
        A.Or(A.Not(r.guard), A.And(r.guard, wcon(r.rule, SIG))), s, Valuation(), budget
    )
    if lhs != rhs:
        return _counterexample(f"wcon-j {_fmt_rule(r)}", s)
    return None


@schema("wcon-k", "wcon", "forall weak consistency: per-witness consistency and pairwise joinability (deterministic bodies)")
def _wk(rng):
    s, budget = _fresh_ctx(rng)
    var = "kx"
    guard = rand_pure_formula(rng, [var], 1)
    body = rand_rule(rng, 2, scope=[var], allow_choose=False)
    r = A.ForallRule(var, guard, body)
    yvar = "ky"
    guard_y = A.subst(guard, var, A.DbVar(yvar))
    body_y = A.subst(body, var, A.DbVar(yvar))
    rhs = A.ForallDb(
        var,
        A.Implies(
            guard,
            A.And(
                wcon(body, SIG),
                A.ForallDb(yvar, A.Implies(guard_y, joinable(body, body_y, SIG))),
            ),
        ),
    )
    lhs = _ev(wcon(r, SIG), s, Valuation(), budget)
    if lhs != _ev(rhs, s, Valuation(), budget):
        return _counterexample(f"wcon-k {_fmt_rule(r)}", s)
    return None


@schema("wcon-l", "wcon", "parallel weak consistency: both sides consistent and joinable (deterministic)")
def _wl(rng):
    s, budget = _fresh_ctx(rng)
    r = A.Par(rand_det_rule(rng, 2), rand_det_rule(rng, 2))
    lhs = _ev(wcon(r, SIG), s, Valuation(), budget)
    rhs = _ev(
        A.And(
            A.And(wcon(r.left, SIG), wcon(r.right, SIG)), joinable(r.left, r.right, SIG)
        ),
        s,
        Valuation(),
        budget,
    )
    if lhs != rhs:
        return _counterexample(f"wcon-l {_fmt_rule(r)}", s)
    return None


@schema("wcon-m", "wcon", "choice weak consistency needs one good witness")
def _wm(rng):
    s, budget = _fresh_ctx(rng)
    var = "cx"
    r = A.Choose(var, rand_pure_formula(rng, [var], 1), rand_rule(rng, 2, scope=[var]))
    lhs = _ev(wcon(r, SIG), s, Valuation(), budget)
    rhs = _ev(
        A.ExistsDb(var, A.And(r.guard, wcon(r.rule, SIG))), s, Valuation(), budget
    )
    if lhs != rhs:
        return _counterexample(f"wcon-m {_fmt_rule(r)}", s)
    return None


@schema("wcon-n", "wcon", "sequence weak consistency chains through a consistent stage")
def _wn(rng):
    s, budget = _fresh_ctx(rng)
    r = A.Seq(rand_rule(rng, 2, choose_budget=1), rand_rule(rng, 2, choose_budget=1))
    lhs = _ev(wcon(r, SIG), s, Valuation(), budget)
    rhs = _ev(
        A.ExistsSO(X, "X", A.And(con(r.first, X, SIG), A.Modal(X, wcon(r.second, SIG)))),
        s,
        Valuation(),
        budget,
    )
    if lhs != rhs:
        return _counterexample(f"wcon-n {_fmt_rule(r)}", s)
    return None


@schema("wcon-o", "wcon", "let weak consistency ignores conflicts at the collapsed location")
def _wo(rng):
    s, budget = _fresh_ctx(rng)
    if rng.random() < 0.5:
        r = A.Let("q", (), rng.choice(list(SIG.location_operators)), rand_rule(rng, 2, choose_budget=1))
    else:
        r = A.Let("p", (A.Apply("a", ()),), rng.choice(list(SIG.location_operators)), rand_rule(rng, 2, choose_budget=1))
    from .evaluator import eval_term

    loc = Location(r.fname, tuple(eval_term(t, s, Valuation(), budget) for t in r.args))
    lhs = _ev(wcon(r, SIG), s, Valuation(), budget)
    rhs = False
    for delta in update_sets(r.rule, s, Valuation(), budget):
        from .state import UpdateSet

        rest = UpdateSet(u for u in delta.updates if u.location != loc)
        if is_consistent(rest):
            rhs = True
            break
    if lhs != rhs:
        return _counterexample(f"wcon-o {_fmt_rule(r)}", s)
    return None


# ---------------------------------------------------------------------------
# Boxed-rule equivalences, composition laws, extensionality


@schema("lemma-p", "lemma", "boxing a conditional splits on the guard")
def _lp(rng):
    s, budget = _fresh_ctx(rng)
    r = A.If(rand_pure_formula(rng, [], 1), rand_rule(rng, 2, choose_budget=1))
    psi = rand_pure_formula(rng, [], 2)
    lhs = _ev(box(r, psi, SIG), s, Valuation(), budget)
    rhs = _ev(
        A.Or(A.And(r.guard, box(r.rule, psi, SIG)), A.And(A.Not(r.guard), psi)),
        s,
        Valuation(),
        budget,
    )
    if lhs != rhs:
        return _counterexample(f"lemma-p {_fmt_rule(r)}", s)
    return None


@schema("lemma-q", "lemma", "boxing a choice quantifies over its witnesses")
def _lq(rng):
    s, budget = _fresh_ctx(rng)
    var = "qx"
    r = A.Choose(var, rand_pure_formula(rng, [var], 1), rand_rule(rng, 2, scope=[var]))
    psi = rand_pure_formula(rng, [], 2)
    lhs = _ev(box(r, psi, SIG), s, Valuation(), budget)
    rhs = _ev(
        A.ForallDb(var, A.Implies(r.guard, box(r.rule, psi, SIG))), s, Valuation(), budget
    )
    if lhs != rhs:
        return _counterexample(f"lemma-q {_fmt_rule(r)}", s)
    return None


@schema("comp-r", "comp", "parallel composition is commutative")
def _cr(rng):
    s, _ = _fresh_ctx(rng)
    r1 = rand_rule(rng, 2, choose_budget=1)
    r2 = rand_rule(rng, 2, choose_budget=1)
    if not rules_equivalent(A.Par(r1, r2), A.Par(r2, r1), s):
        return _counterexample(f"comp-r {_fmt_rule(r1)} | {_fmt_rule(r2)}", s)
    return None


@schema("comp-s", "comp", "parallel composition is associative")
def _cs(rng):
    s, _ = _fresh_ctx(rng)
    r1, r2, r3 = (rand_rule(rng, 2, choose_budget=1) for _ in range(3))
    if not rules_equivalent(A.Par(A.Par(r1, r2), r3), A.Par(r1, A.Par(r2, r3)), s):
        return _counterexample("comp-s", s)
    return None


@schema("comp-t", "comp", "sequential composition is associative")
def _ct(rng):
    s, _ = _fresh_ctx(rng)
    r1, r2, r3 = (rand_rule(rng, 2, choose_budget=1) for _ in range(3))
    if not rules_equivalent(A.Seq(A.Seq(r1, r2), r3), A.Seq(r1, A.Seq(r2, r3)), s):
        return _counterexample("comp-t", s)
    return None


@schema("lemma-u", "lemma", "equivalent rules box the same formulae")
def _lu(rng):
    s, budget = _fresh_ctx(rng)
    r1 = rand_rule(rng, 3, choose_budget=1)
    r2 = _rearranged(rng, r1)
    if not rules_equivalent(r1, r2, s):
        return _counterexample(f"lemma-u rearrangement not equivalent {_fmt_rule(r1)}", s)
    phi = rand_pure_formula(rng, [], 2)
    if _ev(box(r1, phi, SIG), s, Valuation(), budget) != _ev(
        box(r2, phi, SIG), s, Valuation(), budget
    ):
        return _counterexample(f"lemma-u {_fmt_rule(r1)}", s)
    return None


@schema("det-coincidence", "det", "weak and strong consistency coincide for choice-free rules")
def _det(rng):
    s, budget = _fresh_ctx(rng)
    r = rand_det_rule(rng, 3)
    lhs = _ev(wcon(r, SIG), s, Valuation(), budget)
    rhs = _ev(scon(r, SIG), s, Valuation(), budget)
    if lhs != rhs:
        return _counterexample(f"det-coincidence {_fmt_rule(r)}", s)
    return None
