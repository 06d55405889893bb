"""ASTs for the rule DSL and the logic DSL, with sort checking,
free-variable analysis and substitution.

Variable kinds: database variables range over the finite carrier,
algorithmic variables over the algorithmic part, and second-order
variables over finite relations of one of seven sorts:

  M    pairs (db element, algorithmic value), the multiset encodings
  X    update sets: rows (f, args, value)
  Xb   branch-indexed update sets: rows (f, args, value, db element)
  Xm   update multisets: rows (f, args, value, tag)
  Xmb  branch-indexed multisets: rows (f, args, value, tag, db element)
  F    occurrence bijections ending in a db element
  G    occurrence bijections ending in an algorithmic value
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .errors import SortError
from .state import ALG, BRIDGE, BUILTIN_ALG, DB, AlgNum, Signature

SO_SORTS = ("M", "X", "Xb", "Xm", "Xmb", "F", "G")

DB_KIND = "db"
ALG_KIND = "alg"


# ---------------------------------------------------------------------------
# Terms


@dataclass(frozen=True)
class DbVar:
    name: str


@dataclass(frozen=True)
class AlgVar:
    name: str


@dataclass(frozen=True)
class Num:
    value: AlgNum

    def __post_init__(self):
        if not isinstance(self.value, AlgNum):
            object.__setattr__(self, "value", AlgNum(self.value))


@dataclass(frozen=True)
class Apply:
    fname: str
    args: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))


@dataclass(frozen=True)
class RhoTerm:
    """Aggregation term: collect the body's value over every carrier
    element satisfying the guard (one contribution per element)."""

    op: str
    var: str
    body: "Term"
    guard: "Formula"


Term = DbVar | AlgVar | Num | Apply | RhoTerm


# ---------------------------------------------------------------------------
# Formulae


@dataclass(frozen=True)
class Eq:
    left: Term
    right: Term


@dataclass(frozen=True)
class Not:
    sub: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class ForallDb:
    var: str
    sub: "Formula"


@dataclass(frozen=True)
class ForallAlg:
    var: str
    sub: "Formula"


@dataclass(frozen=True)
class ForallSO:
    var: str
    sort: str
    sub: "Formula"

    def __post_init__(self):
        if self.sort not in SO_SORTS:
            raise SortError(f"unknown second-order sort {self.sort!r}")


@dataclass(frozen=True)
class Upd:
    rule: "Rule"
    var: str


@dataclass(frozen=True)
class Upm:
    rule: "Rule"
    var: str


@dataclass(frozen=True)
class SOAtom:
    """Membership atom for a second-order variable.

    For sort M, fname is None and terms is (db term, alg term); for the
    other sorts terms holds the argument terms, the value term and the
    trailing components of the sort's row, flattened.
    """

    var: str
    sort: str
    fname: str | None
    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.sort not in SO_SORTS:
            raise SortError(f"unknown second-order sort {self.sort!r}")


@dataclass(frozen=True)
class Modal:
    """[X]phi: phi holds after applying the update set bound to X;
    vacuously true when that set is inconsistent."""

    var: str
    sub: "Formula"


Formula = Eq | Not | And | ForallDb | ForallAlg | ForallSO | Upd | Upm | SOAtom | Modal


# Derived sugar, expanded eagerly.


def Or(a: Formula, b: Formula) -> Formula:
    return Not(And(Not(a), Not(b)))


def Implies(a: Formula, b: Formula) -> Formula:
    return Not(And(a, Not(b)))


def Iff(a: Formula, b: Formula) -> Formula:
    return And(Implies(a, b), Implies(b, a))


def ExistsDb(var: str, sub: Formula) -> Formula:
    return Not(ForallDb(var, Not(sub)))


def ExistsAlg(var: str, sub: Formula) -> Formula:
    return Not(ForallAlg(var, Not(sub)))


def ExistsSO(var: str, sort: str, sub: Formula) -> Formula:
    return Not(ForallSO(var, sort, Not(sub)))


def TrueF() -> Formula:
    t = Apply("True", ())
    return Eq(t, t)


def FalseF() -> Formula:
    return Not(TrueF())


def big_and(parts) -> Formula:
    parts = list(parts)
    if not parts:
        return TrueF()
    out = parts[0]
    for p in parts[1:]:
        out = And(out, p)
    return out


def big_or(parts) -> Formula:
    parts = list(parts)
    if not parts:
        return FalseF()
    out = parts[0]
    for p in parts[1:]:
        out = Or(out, p)
    return out


# ---------------------------------------------------------------------------
# Rules


@dataclass(frozen=True)
class Assign:
    fname: str
    args: tuple
    rhs: Term

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))


@dataclass(frozen=True)
class If:
    guard: Formula
    rule: "Rule"


@dataclass(frozen=True)
class ForallRule:
    var: str
    guard: Formula
    rule: "Rule"


@dataclass(frozen=True)
class Choose:
    var: str
    guard: Formula
    rule: "Rule"


@dataclass(frozen=True)
class Par:
    left: "Rule"
    right: "Rule"


@dataclass(frozen=True)
class Seq:
    first: "Rule"
    second: "Rule"


@dataclass(frozen=True)
class Let:
    """Bind a location operator to the location (fname, args) and
    aggregate every update the body yields for it into one update."""

    fname: str
    args: tuple
    op: str
    rule: "Rule"

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))


Rule = Assign | If | ForallRule | Choose | Par | Seq | Let


# ---------------------------------------------------------------------------
# Free variables

VarRef = tuple[str, str]  # (kind, name); kind is "db", "alg" or an SO sort


def free_vars(node) -> frozenset[VarRef]:
    """Free variables of a term, formula or rule. For rules these are
    the variables not bound by forall/choose."""
    if isinstance(node, DbVar):
        return frozenset({(DB_KIND, node.name)})
    if isinstance(node, AlgVar):
        return frozenset({(ALG_KIND, node.name)})
    if isinstance(node, Num):
        return frozenset()
    if isinstance(node, Apply):
        return frozenset().union(*[free_vars(a) for a in node.args]) if node.args else frozenset()
    if isinstance(node, RhoTerm):
        return free_vars(node.guard) - {(DB_KIND, node.var)}
    if isinstance(node, Eq):
        return free_vars(node.left) | free_vars(node.right)
    if isinstance(node, Not):
        return free_vars(node.sub)
    if isinstance(node, And):
        return free_vars(node.left) | free_vars(node.right)
    if isinstance(node, ForallDb):
        return free_vars(node.sub) - {(DB_KIND, node.var)}
    if isinstance(node, ForallAlg):
        return free_vars(node.sub) - {(ALG_KIND, node.var)}
    if isinstance(node, ForallSO):
        return free_vars(node.sub) - {(node.sort, node.var)}
    if isinstance(node, Upd):
        return free_vars(node.rule) | {("X", node.var)}
    if isinstance(node, Upm):
        return free_vars(node.rule) | {("Xm", node.var)}
    if isinstance(node, SOAtom):
        out = frozenset({(node.sort, node.var)})
        for t in node.terms:
            out |= free_vars(t)
        return out
    if isinstance(node, Modal):
        return free_vars(node.sub) | {("X", node.var)}
    if isinstance(node, Assign):
        out = free_vars(node.rhs)
        for t in node.args:
            out |= free_vars(t)
        return out
    if isinstance(node, If):
        return free_vars(node.guard) | free_vars(node.rule)
    if isinstance(node, (ForallRule, Choose)):
        return (free_vars(node.guard) | free_vars(node.rule)) - {(DB_KIND, node.var)}
    if isinstance(node, Par):
        return free_vars(node.left) | free_vars(node.right)
    if isinstance(node, Seq):
        return free_vars(node.first) | free_vars(node.second)
    if isinstance(node, Let):
        out = free_vars(node.rule)
        for t in node.args:
            out |= free_vars(t)
        return out
    raise TypeError(f"not an AST node: {node!r}")


def is_closed_rule(r: Rule) -> bool:
    return not free_vars(r)


# ---------------------------------------------------------------------------
# Purity / staticness


def term_is_pure(t: Term) -> bool:
    if isinstance(t, RhoTerm):
        return False
    if isinstance(t, Apply):
        return all(term_is_pure(a) for a in t.args)
    return True


def is_pure(phi: Formula) -> bool:
    """Pure formulae: equalities, negation, conjunction and first-order
    quantifiers over rho-free terms. Guards of conditional, forall and
    choice rules must be pure."""
    if isinstance(phi, Eq):
        return term_is_pure(phi.left) and term_is_pure(phi.right)
    if isinstance(phi, Not):
        return is_pure(phi.sub)
    if isinstance(phi, And):
        return is_pure(phi.left) and is_pure(phi.right)
    if isinstance(phi, (ForallDb, ForallAlg)):
        return is_pure(phi.sub)
    return False


def is_static(node, sig: Signature) -> bool:
    """True when no dynamic function symbol occurs in the node."""
    if isinstance(node, (DbVar, AlgVar, Num)):
        return True
    if isinstance(node, Apply):
        if node.fname not in BUILTIN_ALG and sig.is_dynamic(node.fname):
            return False
        return all(is_static(a, sig) for a in node.args)
    if isinstance(node, RhoTerm):
        return is_static(node.body, sig) and is_static(node.guard, sig)
    if isinstance(node, Eq):
        return is_static(node.left, sig) and is_static(node.right, sig)
    if isinstance(node, Not):
        return is_static(node.sub, sig)
    if isinstance(node, And):
        return is_static(node.left, sig) and is_static(node.right, sig)
    if isinstance(node, (ForallDb, ForallAlg)):
        return is_static(node.sub, sig)
    if isinstance(node, ForallSO):
        return is_static(node.sub, sig)
    if isinstance(node, SOAtom):
        return all(is_static(t, sig) for t in node.terms)
    return False


# ---------------------------------------------------------------------------
# Sort checking


def so_row_schema(sort: str, sig: Signature, fname: str | None):
    """Component sorts of one row of a second-order sort, as a tuple of
    markers: 'args' (argument tuple), 'db', 'alg' or 'val' (the value
    sort of fname)."""
    if sort == "M":
        return ("db", "alg")
    if fname is None:
        raise SortError(f"sort {sort} atoms need a function symbol")
    if sort == "X":
        return ("args", "val")
    if sort == "Xb":
        return ("args", "val", "db")
    if sort == "Xm":
        return ("args", "val", "alg")
    if sort == "Xmb":
        return ("args", "val", "alg", "db")
    if sort == "F":
        return ("args", "val", "alg", "args", "val", "alg", "db")
    if sort == "G":
        return ("args", "val", "alg", "args", "val", "alg", "alg")
    raise SortError(f"unknown second-order sort {sort!r}")


class SortChecker:
    """Checks terms, formulae and rules against a signature. Tracks the
    sorts of free second-order variables for consistency."""

    def __init__(self, sig: Signature):
        self.sig = sig
        self.so_sorts: dict[str, str] = {}

    def _so(self, var: str, sort: str):
        seen = self.so_sorts.setdefault(var, sort)
        if seen != sort:
            raise SortError(f"second-order variable {var!r} used at sorts {seen} and {sort}")

    def term(self, t: Term) -> str:
        if isinstance(t, DbVar):
            return DB
        if isinstance(t, AlgVar):
            return ALG
        if isinstance(t, Num):
            return ALG
        if isinstance(t, Apply):
            if t.fname in BUILTIN_ALG:
                want, arity = ALG, BUILTIN_ALG[t.fname]
            else:
                decl = self.sig.decl(t.fname)
                arity = decl.arity
                want = DB if decl.kind in (DB, BRIDGE) else ALG
            if len(t.args) != arity:
                raise SortError(f"{t.fname!r} expects {arity} arguments, got {len(t.args)}")
            for a in t.args:
                got = self.term(a)
                if got != want:
                    raise SortError(f"{t.fname!r}: {want} argument expected, got {got} term")
            if t.fname in BUILTIN_ALG:
                return ALG
            return DB if decl.kind == DB else ALG
        if isinstance(t, RhoTerm):
            if t.op not in self.sig.location_operators:
                raise SortError(f"unknown location operator {t.op!r}")
            # COUNT never inspects the collected values, so a database
            # body is admitted there; the arithmetic operators need
            # algorithmic values.
            if self.term(t.body) != ALG and t.op != "COUNT":
                raise SortError("aggregation body must be an algorithmic term")
            self.formula(t.guard)
            body_free = free_vars(t.body)
            guard_free = free_vars(t.guard) | {(DB_KIND, t.var)}
            if not body_free <= guard_free:
                raise SortError("aggregation body uses variables the guard does not mention")
            return ALG
        raise TypeError(f"not a term: {t!r}")

    def _component(self, marker: str, fname: str | None) -> str:
        if marker == "db":
            return DB
        if marker == "alg":
            return ALG
        if marker == "val":
            return self.sig.value_sort(fname)
        raise AssertionError(marker)

    def so_atom(self, atom: SOAtom):
        self._so(atom.var, atom.sort)
        schema = so_row_schema(atom.sort, self.sig, atom.fname)
        if atom.fname is not None:
            if not self.sig.is_dynamic(atom.fname):
                raise SortError(f"{atom.fname!r}: membership atoms need a dynamic function")
            arity = self.sig.arity(atom.fname)
        terms = list(atom.terms)
        want: list[str] = []
        for marker in schema:
            if marker == "args":
                want.extend([DB] * arity)
            else:
                want.append(self._component(marker, atom.fname))
        if len(terms) != len(want):
            raise SortError(
                f"{atom.sort}-atom for {atom.fname or 'M'}: expected {len(want)} terms, got {len(terms)}"
            )
        for t, w in zip(terms, want):
            got = self.term(t)
            if got != w:
                raise SortError(f"{atom.sort}-atom component: {w} term expected, got {got}")

    def formula(self, phi: Formula):
        if isinstance(phi, Eq):
            ls, rs = self.term(phi.left), self.term(phi.right)
            if ls != rs:
                raise SortError("equality between a database term and an algorithmic term")
            return
        if isinstance(phi, Not):
            return self.formula(phi.sub)
        if isinstance(phi, And):
            self.formula(phi.left)
            self.formula(phi.right)
            return
        if isinstance(phi, (ForallDb, ForallAlg)):
            return self.formula(phi.sub)
        if isinstance(phi, ForallSO):
            outer = self.so_sorts.pop(phi.var, None)
            self.so_sorts[phi.var] = phi.sort
            self.formula(phi.sub)
            del self.so_sorts[phi.var]
            if outer is not None:
                self.so_sorts[phi.var] = outer
            return
        if isinstance(phi, Upd):
            self._so(phi.var, "X")
            return self.rule(phi.rule)
        if isinstance(phi, Upm):
            self._so(phi.var, "Xm")
            return self.rule(phi.rule)
        if isinstance(phi, SOAtom):
            return self.so_atom(phi)
        if isinstance(phi, Modal):
            self._so(phi.var, "X")
            return self.formula(phi.sub)
        raise TypeError(f"not a formula: {phi!r}")

    def _guard(self, phi: Formula, where: str):
        if not is_pure(phi):
            raise SortError(f"{where} guard must be a pure formula")
        self.formula(phi)

    def rule(self, r: Rule):
        if isinstance(r, Assign):
            decl = self.sig.decl(r.fname)
            if not decl.dynamic:
                raise SortError(f"cannot assign to static function {r.fname!r}")
            if len(r.args) != decl.arity:
                raise SortError(f"{r.fname!r} expects {decl.arity} arguments, got {len(r.args)}")
            for a in r.args:
                if self.term(a) != DB:
                    raise SortError(f"{r.fname!r}: location arguments must be database terms")
            want = DB if decl.kind == DB else ALG
            if self.term(r.rhs) != want:
                raise SortError(f"{r.fname!r}: assigned value must be a {want} term")
            return
        if isinstance(r, If):
            self._guard(r.guard, "conditional")
            return self.rule(r.rule)
        if isinstance(r, (ForallRule, Choose)):
            kind = "forall" if isinstance(r, ForallRule) else "choose"
            self._guard(r.guard, kind)
            return self.rule(r.rule)
        if isinstance(r, Par):
            self.rule(r.left)
            self.rule(r.right)
            return
        if isinstance(r, Seq):
            self.rule(r.first)
            self.rule(r.second)
            return
        if isinstance(r, Let):
            decl = self.sig.decl(r.fname)
            if decl.kind != BRIDGE:
                raise SortError(
                    f"let location {r.fname!r} must be a bridge function "
                    "(location operators aggregate algorithmic values)"
                )
            if not decl.dynamic:
                raise SortError(f"let location {r.fname!r} must be dynamic")
            if len(r.args) != decl.arity:
                raise SortError(f"{r.fname!r} expects {decl.arity} arguments, got {len(r.args)}")
            for a in r.args:
                if self.term(a) != DB:
                    raise SortError("let location arguments must be database terms")
            if r.op not in self.sig.location_operators:
                raise SortError(f"unknown location operator {r.op!r}")
            return self.rule(r.rule)
        raise TypeError(f"not a rule: {r!r}")


def check_term(t: Term, sig: Signature) -> str:
    return SortChecker(sig).term(t)


def check_formula(phi: Formula, sig: Signature):
    SortChecker(sig).formula(phi)


def check_rule(r: Rule, sig: Signature):
    SortChecker(sig).rule(r)


# ---------------------------------------------------------------------------
# Substitution (database variables)


def subst(node, var: str, replacement: Term):
    """Replace free occurrences of the database variable var. Bound
    occurrences shadow; substituting under a binder that captures a
    variable of the replacement raises."""
    rep_free = {n for k, n in free_vars(replacement) if k == DB_KIND}

    def go(n):
        if isinstance(n, DbVar):
            return replacement if n.name == var else n
        if isinstance(n, (AlgVar, Num)):
            return n
        if isinstance(n, Apply):
            return Apply(n.fname, tuple(go(a) for a in n.args))
        if isinstance(n, RhoTerm):
            if n.var == var:
                return n
            if n.var in rep_free and (DB_KIND, var) in free_vars(n):
                raise SortError(f"substitution would capture {n.var!r}")
            return RhoTerm(n.op, n.var, go(n.body), go(n.guard))
        if isinstance(n, Eq):
            return Eq(go(n.left), go(n.right))
        if isinstance(n, Not):
            return Not(go(n.sub))
        if isinstance(n, And):
            return And(go(n.left), go(n.right))
        if isinstance(n, ForallDb):
            if n.var == var:
                return n
            if n.var in rep_free and (DB_KIND, var) in free_vars(n):
                raise SortError(f"substitution would capture {n.var!r}")
            return ForallDb(n.var, go(n.sub))
        if isinstance(n, ForallAlg):
            return ForallAlg(n.var, go(n.sub))
        if isinstance(n, ForallSO):
            return ForallSO(n.var, n.sort, go(n.sub))
        if isinstance(n, Upd):
            return Upd(go(n.rule), n.var)
        if isinstance(n, Upm):
            return Upm(go(n.rule), n.var)
        if isinstance(n, SOAtom):
            return SOAtom(n.var, n.sort, n.fname, tuple(go(t) for t in n.terms))
        if isinstance(n, Modal):
            return Modal(n.var, go(n.sub))
        if isinstance(n, Assign):
            return Assign(n.fname, tuple(go(a) for a in n.args), go(n.rhs))
        if isinstance(n, If):
            return If(go(n.guard), go(n.rule))
        if isinstance(n, (ForallRule, Choose)):
            cls = type(n)
            if n.var == var:
                return n
            if n.var in rep_free and (DB_KIND, var) in free_vars(n):
                raise SortError(f"substitution would capture {n.var!r}")
            return cls(n.var, go(n.guard), go(n.rule))
        if isinstance(n, Par):
            return Par(go(n.left), go(n.right))
        if isinstance(n, Seq):
            return Seq(go(n.first), go(n.second))
        if isinstance(n, Let):
            return Let(n.fname, tuple(go(a) for a in n.args), n.op, go(n.rule))
        raise TypeError(f"not an AST node: {n!r}")

    return go(node)


# ---------------------------------------------------------------------------
# Helpers


class FreshNames:
    """Deterministic fresh-variable source."""

    def __init__(self, prefix="v"):
        self.prefix = prefix
        self.counter = itertools.count()

    def db(self) -> str:
        return f"{self.prefix}{next(self.counter)}"

    def alg(self) -> str:
        return f"{self.prefix}{next(self.counter)}"

    def so(self, sort: str) -> str:
        return f"{sort}_{self.prefix}{next(self.counter)}"


def walk_formula(phi):
    """Yield every sub-formula (pre-order), descending into rho guards
    but not into rules."""
    yield phi
    if isinstance(phi, Eq):
        for t in (phi.left, phi.right):
            yield from _walk_term_formulas(t)
    elif isinstance(phi, Not):
        yield from walk_formula(phi.sub)
    elif isinstance(phi, And):
        yield from walk_formula(phi.left)
        yield from walk_formula(phi.right)
    elif isinstance(phi, (ForallDb, ForallAlg, ForallSO, Modal)):
        yield from walk_formula(phi.sub)
    elif isinstance(phi, SOAtom):
        for t in phi.terms:
            yield from _walk_term_formulas(t)


def _walk_term_formulas(t):
    if isinstance(t, Apply):
        for a in t.args:
            yield from _walk_term_formulas(a)
    elif isinstance(t, RhoTerm):
        yield from walk_formula(t.guard)
        yield from _walk_term_formulas(t.body)


def iter_subrules(r: Rule):
    yield r
    if isinstance(r, (If, ForallRule, Choose, Let)):
        yield from iter_subrules(r.rule)
    elif isinstance(r, Par):
        yield from iter_subrules(r.left)
        yield from iter_subrules(r.right)
    elif isinstance(r, Seq):
        yield from iter_subrules(r.first)
        yield from iter_subrules(r.second)


def rule_has_choose(r: Rule) -> bool:
    return any(isinstance(s, Choose) for s in iter_subrules(r))
