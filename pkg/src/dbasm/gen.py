"""Random generation of small states, rules, formulae and candidate
relations for the axiom-validity harness.

Desk scale: carriers of 2..4 elements, rule depth up to 4, two choose
nodes per rule at most, algorithmic constants in 0..9.
"""

from __future__ import annotations

import random

from . import ast as A
from .errors import GenerationExhausted
from .evaluator import QuantBudget, default_budget, rel_of_update_set
from .state import (
    ALG,
    BRIDGE,
    DB,
    AlgNum,
    DbElem,
    FuncDecl,
    Signature,
    State,
    tag_multiset,
)

# One shared signature family keeps conUSet expansions small while
# covering every kind of dynamic symbol.
GEN_SIG = Signature.make(
    [
        FuncDecl("g", DB, 1, dynamic=True),    # unary relation
        FuncDecl("h", DB, 1, dynamic=True),    # unary db-valued function
        FuncDecl("p", BRIDGE, 1, dynamic=True),
        FuncDecl("q", BRIDGE, 0, dynamic=True),
        FuncDecl("e", DB, 2, dynamic=False),   # static relation for guards
        FuncDecl("a", DB, 0, dynamic=False),
        FuncDecl("b", DB, 0, dynamic=False),
    ]
)

TRUE_T = A.Apply("True", ())
FALSE_T = A.Apply("False", ())


def rand_state(rng: random.Random, min_size=2, max_size=4) -> State:
    n = rng.randint(min_size, max_size)
    elems = [DbElem(f"e{i}") for i in range(n)]
    entries = {}
    for x in elems:
        if rng.random() < 0.5:
            entries[("g", (x,))] = DbElem("True")
        if rng.random() < 0.6:
            entries[("h", (x,))] = rng.choice(elems)
        if rng.random() < 0.6:
            entries[("p", (x,))] = AlgNum(rng.randint(0, 9))
        for y in elems:
            if rng.random() < 0.4:
                entries[("e", (x, y))] = DbElem("True")
    if rng.random() < 0.7:
        entries[("q", ())] = AlgNum(rng.randint(0, 9))
    entries[("a", ())] = rng.choice(elems)
    entries[("b", ())] = rng.choice(elems)
    return State(GEN_SIG, tuple(elems), entries)


def budget_for(state: State, extra_values=()) -> QuantBudget:
    vals = [AlgNum(i) for i in range(4)]
    return default_budget(state, tuple(vals) + tuple(extra_values))


# ---------------------------------------------------------------------------
# Terms and pure formulae


def rand_db_term(rng, scope: list[str]):
    roll = rng.random()
    if scope and roll < 0.5:
        return A.DbVar(rng.choice(scope))
    if roll < 0.75:
        return A.Apply(rng.choice(["a", "b"]), ())
    inner = A.DbVar(rng.choice(scope)) if scope and rng.random() < 0.5 else A.Apply("a", ())
    return A.Apply("h", (inner,))


def rand_alg_term(rng, scope: list[str]):
    roll = rng.random()
    if roll < 0.4:
        return A.Num(AlgNum(rng.randint(0, 3)))
    if roll < 0.7:
        return A.Apply("p", (rand_db_term(rng, scope),))
    if roll < 0.85:
        return A.Apply("q", ())
    return A.Apply("+", (A.Apply("q", ()), A.Num(AlgNum(rng.randint(0, 2)))))


def rand_pure_atom(rng, scope: list[str]) -> A.Formula:
    roll = rng.random()
    if roll < 0.3:
        return A.Eq(A.Apply("g", (rand_db_term(rng, scope),)), TRUE_T)
    if roll < 0.5:
        return A.Eq(
            A.Apply("e", (rand_db_term(rng, scope), rand_db_term(rng, scope))), TRUE_T
        )
    if roll < 0.75:
        return A.Eq(rand_db_term(rng, scope), rand_db_term(rng, scope))
    return A.Eq(rand_alg_term(rng, scope), rand_alg_term(rng, scope))


def rand_pure_formula(rng, scope: list[str], depth=2) -> A.Formula:
    if depth <= 0 or rng.random() < 0.4:
        return rand_pure_atom(rng, scope)
    roll = rng.random()
    if roll < 0.3:
        return A.Not(rand_pure_formula(rng, scope, depth - 1))
    if roll < 0.6:
        return A.And(
            rand_pure_formula(rng, scope, depth - 1), rand_pure_formula(rng, scope, depth - 1)
        )
    if roll < 0.8:
        return A.Or(
            rand_pure_formula(rng, scope, depth - 1), rand_pure_formula(rng, scope, depth - 1)
        )
    var = f"w{depth}{rng.randint(0, 9)}"
    body = rand_pure_formula(rng, scope + [var], depth - 1)
    return A.ExistsDb(var, body) if rng.random() < 0.5 else A.ForallDb(var, body)


def rand_static_pure_formula(rng, depth=2) -> A.Formula:
    """Pure formula with no dynamic symbols (for the static-formula laws)."""
    def atom(scope):
        roll = rng.random()
        if roll < 0.4:
            return A.Eq(
                A.Apply("e", (static_db(scope), static_db(scope))), TRUE_T
            )
        if roll < 0.8:
            return A.Eq(static_db(scope), static_db(scope))
        return A.Eq(A.Num(AlgNum(rng.randint(0, 2))), A.Num(AlgNum(rng.randint(0, 2))))

    def static_db(scope):
        if scope and rng.random() < 0.5:
            return A.DbVar(rng.choice(scope))
        return A.Apply(rng.choice(["a", "b"]), ())

    def go(scope, d):
        if d <= 0 or rng.random() < 0.4:
            return atom(scope)
        roll = rng.random()
        if roll < 0.35:
            return A.Not(go(scope, d - 1))
        if roll < 0.7:
            return A.And(go(scope, d - 1), go(scope, d - 1))
        var = f"sv{d}{rng.randint(0, 9)}"
        return A.ForallDb(var, go(scope + [var], d - 1))

    return go([], depth)


# ---------------------------------------------------------------------------
# Rules


def rand_assign(rng, scope: list[str]) -> A.Assign:
    fname = rng.choice(["g", "h", "p", "q"])
    decl = GEN_SIG.decl(fname)
    args = tuple(rand_db_term(rng, scope) for _ in range(decl.arity))
    if fname == "g":
        rhs = TRUE_T if rng.random() < 0.7 else FALSE_T
    elif fname == "h":
        rhs = rand_db_term(rng, scope)
    else:
        rhs = rand_alg_term(rng, scope)
    return A.Assign(fname, args, rhs)


def rand_rule(
    rng,
    depth=3,
    scope: list[str] | None = None,
    allow_choose: bool = True,
    choose_budget: int = 2,
    allow_let: bool = True,
) -> A.Rule:
    """A closed rule when called with the default empty scope."""
    scope = list(scope or [])

    def go(d, scope, chooses_left):
        if d <= 0 or rng.random() < 0.25:
            return rand_assign(rng, scope)
        options = ["if", "forall", "par", "seq", "assign"]
        if allow_let:
            options.append("let")
        if allow_choose and chooses_left > 0:
            options.append("choose")
            options.append("choose")
        pick = rng.choice(options)
        if pick == "assign":
            return rand_assign(rng, scope)
        if pick == "if":
            return A.If(rand_pure_formula(rng, scope, 1), go(d - 1, scope, chooses_left))
        if pick == "forall":
            var = f"fx{d}{rng.randint(0, 9)}"
            guard = rand_pure_formula(rng, scope + [var], 1)
            return A.ForallRule(var, guard, go(d - 1, scope + [var], 0))
        if pick == "choose":
            var = f"cx{d}{rng.randint(0, 9)}"
            guard = rand_pure_formula(rng, scope + [var], 1)
            return A.Choose(var, guard, go(d - 1, scope + [var], chooses_left - 1))
        if pick == "par":
            return A.Par(go(d - 1, scope, chooses_left), go(d - 1, scope, 0))
        if pick == "seq":
            return A.Seq(go(d - 1, scope, chooses_left), go(d - 1, scope, 0))
        if pick == "let":
            if rng.random() < 0.5:
                fname, args = "q", ()
            else:
                fname, args = "p", (rand_db_term(rng, scope),)
            op = rng.choice(list(GEN_SIG.location_operators))
            return A.Let(fname, args, op, go(d - 1, scope, chooses_left))
        raise AssertionError(pick)

    return go(depth, scope, choose_budget if allow_choose else 0)


def rand_det_rule(rng, depth=3) -> A.Rule:
    return rand_rule(rng, depth, allow_choose=False)


# ---------------------------------------------------------------------------
# Candidate relations


def _mutate_rel(rng, rel: frozenset, space: list) -> frozenset:
    rows = set(rel)
    action = rng.random()
    if action < 0.4 and rows:
        rows.discard(rng.choice(sorted(rows, key=repr)))
    elif action < 0.8 and space:
        rows.add(rng.choice(space))
    elif rows:
        victim = rng.choice(sorted(rows, key=repr))
        rows.discard(victim)
        if space:
            rows.add(rng.choice(space))
    return frozenset(rows)


def _x_row_space(state: State, rng) -> list:
    carrier = list(state.db_carrier)
    rows = []
    for decl in GEN_SIG.dynamic_functions():
        for _ in range(4):
            args = tuple(rng.choice(carrier) for _ in range(decl.arity))
            if decl.kind == DB:
                value = rng.choice(carrier)
            else:
                value = AlgNum(rng.randint(0, 9))
            rows.append((decl.name, args, value))
    return rows


def x_candidates(rng, rule, state, budget, z=None, n_extra=3) -> list[frozenset]:
    """Update-set relation candidates: the family itself, mutants of its
    members, and random well-formed relations."""
    from .semantics import update_sets
    from .state import Valuation

    fam = update_sets(rule, state, z if z is not None else Valuation(), budget)
    rels = [rel_of_update_set(d) for d in fam]
    space = _x_row_space(state, rng)
    out = list(rels)
    for _ in range(n_extra):
        if rels and rng.random() < 0.6:
            out.append(_mutate_rel(rng, rng.choice(rels), space))
        else:
            out.append(frozenset(rng.sample(space, k=min(len(space), rng.randint(0, 3)))))
    return out


def xm_candidates(rng, rule, state, budget, z=None, n_extra=3) -> list[frozenset]:
    """Tagged multiset relation candidates: canonical taggings of the
    family, retagged variants (tag values are immaterial), and mutants."""
    from .semantics import update_multisets
    from .state import Valuation

    fam = update_multisets(rule, state, z if z is not None else Valuation(), budget)
    rels = [tag_multiset(m) for m in fam]
    out = list(rels)
    for rel in rels[:2]:
        # shift the tags; untagging must not care
        shifted = frozenset((f, args, v, AlgNum(t.value + 5)) for f, args, v, t in rel)
        out.append(shifted)
    space = [
        (f, args, v, AlgNum(rng.randint(0, 3)))
        for f, args, v in _x_row_space(state, rng)[:8]
    ]
    for _ in range(n_extra):
        if rels and rng.random() < 0.6:
            out.append(_mutate_rel(rng, rng.choice(rels), space))
        else:
            out.append(frozenset(rng.sample(space, k=min(len(space), rng.randint(0, 3)))))
    return out


def inconsistent_candidate(rng, state) -> frozenset:
    """A relation with a definite per-location conflict."""
    carrier = list(state.db_carrier)
    x = rng.choice(carrier)
    return frozenset({("p", (x,), AlgNum(1)), ("p", (x,), AlgNum(2))})


def retry(rng, times, producer, accept):
    for _ in range(times):
        item = producer(rng)
        if accept(item):
            return item
    raise GenerationExhausted("could not satisfy the generation constraints")
