"""Derived predicates of the logic, macro-expanded into core formulae:
consistency of update sets and rules, joinability, and the rule-level
modalities, plus semantic rule equivalence."""

from __future__ import annotations

from . import ast as A
from .state import ALG, DB, Signature, State, Valuation
from .semantics import update_sets


def _value_binder(sig: Signature, fname: str):
    """(variable constructor, quantifier constructor) for the value sort
    of a dynamic function."""
    if sig.value_sort(fname) == DB:
        return A.DbVar, A.ForallDb
    return A.AlgVar, A.ForallAlg


def _fresh(base: str, taken: set) -> str:
    name = base
    i = 0
    while name in taken:
        i += 1
        name = f"{base}{i}"
    taken.add(name)
    return name


def _taken_names(*nodes) -> set:
    out = set()
    for n in nodes:
        if n is None:
            continue
        out.update(name for _, name in A.free_vars(n))
    return out


def con_uset(var: str, sig: Signature) -> A.Formula:
    """conUSet(X): no function maps one argument tuple to two values."""
    parts = []
    for decl in sig.dynamic_functions():
        mkvar, quant = _value_binder(sig, decl.name)
        argnames = [f"u{i}" for i in range(decl.arity)]
        y, zed = mkvar("uy"), mkvar("uz")
        args = tuple(A.DbVar(n) for n in argnames)
        body = A.Implies(
            A.And(
                A.SOAtom(var, "X", decl.name, args + (y,)),
                A.SOAtom(var, "X", decl.name, args + (zed,)),
            ),
            A.Eq(y, zed),
        )
        body = quant(zed.name, body)
        body = quant(y.name, body)
        for n in reversed(argnames):
            body = A.ForallDb(n, body)
        parts.append(body)
    return A.big_and(parts)


def con(rule: A.Rule, var: str, sig: Signature) -> A.Formula:
    return A.And(A.Upd(rule, var), con_uset(var, sig))


def wcon(rule: A.Rule, sig: Signature) -> A.Formula:
    """Some update set the rule yields is consistent."""
    x = _fresh("Wc", _taken_names(rule))
    return A.ExistsSO(x, "X", con(rule, x, sig))


def scon(rule: A.Rule, sig: Signature) -> A.Formula:
    """Every update set the rule yields is consistent."""
    x = _fresh("Sc", _taken_names(rule))
    return A.ForallSO(x, "X", A.Implies(A.Upd(rule, x), con_uset(x, sig)))


def joinable(r1: A.Rule, r2: A.Rule, sig: Signature) -> A.Formula:
    """Some pair of yielded update sets has no cross conflicts."""
    taken = _taken_names(r1, r2)
    x1, x2 = _fresh("J1", taken), _fresh("J2", taken)
    cross = []
    for decl in sig.dynamic_functions():
        mkvar, quant = _value_binder(sig, decl.name)
        argnames = [f"j{i}" for i in range(decl.arity)]
        y, zed = mkvar("jy"), mkvar("jz")
        args = tuple(A.DbVar(n) for n in argnames)
        body = A.Implies(
            A.And(
                A.SOAtom(x1, "X", decl.name, args + (y,)),
                A.SOAtom(x2, "X", decl.name, args + (zed,)),
            ),
            A.Eq(y, zed),
        )
        body = quant(zed.name, body)
        body = quant(y.name, body)
        for n in reversed(argnames):
            body = A.ForallDb(n, body)
        cross.append(body)
    inner = A.And(A.And(A.Upd(r1, x1), A.Upd(r2, x2)), A.big_and(cross))
    return A.ExistsSO(x1, "X", A.ExistsSO(x2, "X", inner))


def box(rule: A.Rule, phi: A.Formula, sig: Signature) -> A.Formula:
    """[r]phi: phi holds in every consistent successor."""
    x = _fresh("Bx", _taken_names(rule, phi))
    return A.ForallSO(x, "X", A.Implies(A.Upd(rule, x), A.Modal(x, phi)))


def dia(rule: A.Rule, phi: A.Formula, sig: Signature) -> A.Formula:
    """<r>phi: phi holds in some successor (or some yield is
    inconsistent, which satisfies the modal vacuously)."""
    x = _fresh("Dx", _taken_names(rule, phi))
    return A.ExistsSO(x, "X", A.And(A.Upd(rule, x), A.Modal(x, phi)))


_MACROS = {
    "conUSet": lambda sig, var: con_uset(var, sig),
    "con": lambda sig, rule, var: con(rule, var, sig),
    "wcon": lambda sig, rule: wcon(rule, sig),
    "scon": lambda sig, rule: scon(rule, sig),
    "joinable": lambda sig, r1, r2: joinable(r1, r2, sig),
    "box": lambda sig, rule, phi: box(rule, phi, sig),
    "dia": lambda sig, rule, phi: dia(rule, phi, sig),
}


def expand(macro: str, sig: Signature, *args) -> A.Formula:
    """Expand a derived predicate into a core formula."""
    try:
        builder = _MACROS[macro]
    except KeyError:
        raise KeyError(f"unknown macro {macro!r}") from None
    return builder(sig, *args)


def rules_equivalent(r1: A.Rule, r2: A.Rule, s: State) -> bool:
    """Two closed rules are equivalent over a state when they yield the
    same family of update sets."""
    empty = Valuation()
    return update_sets(r1, s, empty) == update_sets(r2, s, empty)
