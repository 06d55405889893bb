"""Canonical text rendering of terms, formulae and rules.

``parse(print(ast)) == ast`` for every AST the parsers accept; the
printer re-sugars derived forms (or / implies / exists, comparisons,
relation atoms) deterministically.
"""

from __future__ import annotations

from . import ast as A
from .state import AlgNum


def fmt_term(t) -> str:
    if isinstance(t, A.DbVar):
        return t.name
    if isinstance(t, A.AlgVar):
        return f"${t.name}"
    if isinstance(t, A.Num):
        return str(t.value.value)
    if isinstance(t, A.Apply):
        if t.fname in ("+", "-") and len(t.args) == 2:
            return f"({fmt_term(t.args[0])} {t.fname} {fmt_term(t.args[1])})"
        if not t.args:
            return t.fname
        return f"{t.fname}({', '.join(fmt_term(a) for a in t.args)})"
    if isinstance(t, A.RhoTerm):
        return f"rho[{t.op}] {t.var} ({fmt_term(t.body)} | {fmt_formula(t.guard)})"
    raise TypeError(f"not a term: {t!r}")


def _is_true_app(t) -> bool:
    return isinstance(t, A.Apply) and t.fname == "True" and not t.args


_ONE = A.Num(AlgNum(1))


def fmt_formula(phi, sig=None) -> str:
    # literal sugar
    if phi == A.TrueF():
        return "true"
    if phi == A.FalseF():
        return "false"
    if isinstance(phi, A.Eq):
        left, right = phi.left, phi.right
        if (
            isinstance(left, A.Apply)
            and left.fname in ("<", "<=")
            and len(left.args) == 2
            and right == _ONE
        ):
            a, b = left.args
            return f"{fmt_term(a)} {left.fname} {fmt_term(b)}"
        if _is_true_app(right) and isinstance(left, A.Apply) and not _is_true_app(left):
            if sig is None or (sig.has(left.fname) and sig.kind(left.fname) == "db"):
                return fmt_term(left)
        return f"{fmt_term(left)} = {fmt_term(right)}"
    if isinstance(phi, A.Not):
        inner = phi.sub
        # or-sugar: not(not a and not b)
        if (
            isinstance(inner, A.And)
            and isinstance(inner.left, A.Not)
            and isinstance(inner.right, A.Not)
        ):
            return f"({fmt_formula(inner.left.sub, sig)} or {fmt_formula(inner.right.sub, sig)})"
        # implies-sugar: not(a and not b)
        if isinstance(inner, A.And) and isinstance(inner.right, A.Not):
            return f"({fmt_formula(inner.left, sig)} implies {fmt_formula(inner.right.sub, sig)})"
        # exists-sugar: not forall v not phi
        if isinstance(inner, A.ForallDb) and isinstance(inner.sub, A.Not):
            return f"exists {inner.var} ({fmt_formula(inner.sub.sub, sig)})"
        if isinstance(inner, A.ForallAlg) and isinstance(inner.sub, A.Not):
            return f"exists ${inner.var} ({fmt_formula(inner.sub.sub, sig)})"
        if isinstance(inner, A.ForallSO) and isinstance(inner.sub, A.Not):
            return f"exists {inner.var}:{inner.sort} ({fmt_formula(inner.sub.sub, sig)})"
        if isinstance(inner, A.Eq):
            rendered = fmt_formula(inner, sig)
            if " = " in rendered and not rendered.startswith("("):
                left, right = rendered.split(" = ", 1)
                return f"{left} != {right}"
        return f"not {fmt_formula(inner, sig)}"
    if isinstance(phi, A.And):
        return f"({fmt_formula(phi.left, sig)} and {fmt_formula(phi.right, sig)})"
    if isinstance(phi, A.ForallDb):
        return f"forall {phi.var} ({fmt_formula(phi.sub, sig)})"
    if isinstance(phi, A.ForallAlg):
        return f"forall ${phi.var} ({fmt_formula(phi.sub, sig)})"
    if isinstance(phi, A.ForallSO):
        return f"forall {phi.var}:{phi.sort} ({fmt_formula(phi.sub, sig)})"
    if isinstance(phi, A.Upd):
        return f"upd({{ {fmt_rule(phi.rule)} }}, {phi.var})"
    if isinstance(phi, A.Upm):
        return f"upm({{ {fmt_rule(phi.rule)} }}, {phi.var})"
    if isinstance(phi, A.SOAtom):
        parts = [] if phi.fname is None else [phi.fname]
        parts.extend(fmt_term(t) for t in phi.terms)
        return f"{phi.var}({', '.join(parts)})"
    if isinstance(phi, A.Modal):
        return f"[{phi.var}] ({fmt_formula(phi.sub, sig)})"
    raise TypeError(f"not a formula: {phi!r}")


def fmt_rule(r, indent: int | None = None) -> str:
    """Single-line canonical form; pass indent=0 for a block layout."""
    if indent is None:
        return _fmt_rule_flat(r)
    return _fmt_rule_block(r, indent)


def _assign_text(r: A.Assign) -> str:
    head = r.fname if not r.args else f"{r.fname}({', '.join(fmt_term(a) for a in r.args)})"
    return f"{head} := {fmt_term(r.rhs)}"


def _par_chain(r) -> list:
    out = [r.left]
    rest = r.right
    while isinstance(rest, A.Par):
        out.append(rest.left)
        rest = rest.right
    out.append(rest)
    return out


def _seq_chain(r) -> list:
    out = [r.first]
    rest = r.second
    while isinstance(rest, A.Seq):
        out.append(rest.first)
        rest = rest.second
    out.append(rest)
    return out


def _let_head(r: A.Let) -> str:
    return f"let ({r.fname}, ({', '.join(fmt_term(a) for a in r.args)})) ~> {r.op}"


def _fmt_rule_flat(r) -> str:
    if isinstance(r, A.Assign):
        return _assign_text(r)
    if isinstance(r, A.If):
        return f"if {fmt_formula(r.guard)} then {_fmt_rule_flat(r.rule)} endif"
    if isinstance(r, A.ForallRule):
        return f"forall {r.var} with {fmt_formula(r.guard)} do {_fmt_rule_flat(r.rule)} enddo"
    if isinstance(r, A.Choose):
        return f"choose {r.var} with {fmt_formula(r.guard)} do {_fmt_rule_flat(r.rule)} enddo"
    if isinstance(r, A.Par):
        return "par " + " ".join(_fmt_rule_flat(x) for x in _par_chain(r)) + " endpar"
    if isinstance(r, A.Seq):
        return "seq " + " ".join(_fmt_rule_flat(x) for x in _seq_chain(r)) + " endseq"
    if isinstance(r, A.Let):
        return f"{_let_head(r)} in {_fmt_rule_flat(r.rule)} endlet"
    raise TypeError(f"not a rule: {r!r}")


def _fmt_rule_block(r, level: int) -> str:
    pad = "  " * level
    if isinstance(r, A.Assign):
        return pad + _assign_text(r)
    if isinstance(r, A.If):
        return (
            f"{pad}if {fmt_formula(r.guard)} then\n"
            f"{_fmt_rule_block(r.rule, level + 1)}\n{pad}endif"
        )
    if isinstance(r, A.ForallRule):
        return (
            f"{pad}forall {r.var} with {fmt_formula(r.guard)} do\n"
            f"{_fmt_rule_block(r.rule, level + 1)}\n{pad}enddo"
        )
    if isinstance(r, A.Choose):
        return (
            f"{pad}choose {r.var} with {fmt_formula(r.guard)} do\n"
            f"{_fmt_rule_block(r.rule, level + 1)}\n{pad}enddo"
        )
    if isinstance(r, A.Par):
        inner = "\n".join(_fmt_rule_block(x, level + 1) for x in _par_chain(r))
        return f"{pad}par\n{inner}\n{pad}endpar"
    if isinstance(r, A.Seq):
        inner = "\n".join(_fmt_rule_block(x, level + 1) for x in _seq_chain(r))
        return f"{pad}seq\n{inner}\n{pad}endseq"
    if isinstance(r, A.Let):
        return (
            f"{pad}{_let_head(r)} in\n"
            f"{_fmt_rule_block(r.rule, level + 1)}\n{pad}endlet"
        )
    raise TypeError(f"not a rule: {r!r}")
