"""Meta-finite states, locations, updates and update (multi)sets.

A state has a finite database carrier of opaque elements, an algorithmic
part realized as exact rationals (with a designated non-value ``UNDEF``),
and bridge functions mapping database tuples into the algorithmic part.
Everything here is an immutable value; ``apply`` returns a fresh state.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping

from .errors import InconsistentUpdateSet, SignatureError, SortError

# ---------------------------------------------------------------------------
# Values


@dataclass(frozen=True)
class DbElem:
    """An opaque element of the finite database carrier."""

    name: str

    def __repr__(self):
        return f"DbElem({self.name!r})"

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class AlgNum:
    """An exact rational in the algorithmic carrier."""

    value: Fraction

    def __init__(self, value):
        object.__setattr__(self, "value", Fraction(value))

    def __repr__(self):
        return f"AlgNum({str(self.value)!r})"

    def __str__(self):
        return str(self.value)


class UndefType:
    """The designated non-value of the algorithmic sort (singleton)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNDEF"

    def __str__(self):
        return "undef"

    def __hash__(self):
        return hash("dbasm.UNDEF")

    def __eq__(self, other):
        return isinstance(other, UndefType)


UNDEF = UndefType()

Value = DbElem | AlgNum | UndefType

TRUE = DbElem("True")
FALSE = DbElem("False")


def is_alg_value(v) -> bool:
    return isinstance(v, (AlgNum, UndefType))


def canon_key(v):
    """Total order key over values, tuples of values, and strings."""
    if isinstance(v, UndefType):
        return (0,)
    if isinstance(v, AlgNum):
        return (1, v.value)
    if isinstance(v, DbElem):
        return (2, v.name)
    if isinstance(v, str):
        return (3, v)
    if isinstance(v, int):
        return (4, v)
    if isinstance(v, tuple):
        return (5, len(v)) + tuple(canon_key(x) for x in v)
    if isinstance(v, frozenset):
        return (6,) + tuple(sorted(canon_key(x) for x in v))
    raise TypeError(f"no canonical order for {type(v)!r}")


# ---------------------------------------------------------------------------
# Signatures

DB = "db"
ALG = "alg"
BRIDGE = "bridge"

LOCATION_OPERATORS = ("SUM", "COUNT", "MIN", "MAX", "AVG")

# Interpreted algorithmic builtins, always available and static.
BUILTIN_ALG = {"+": 2, "-": 2, "<": 2, "<=": 2}


@dataclass(frozen=True)
class FuncDecl:
    name: str
    kind: str  # DB | ALG | BRIDGE
    arity: int
    dynamic: bool = False


@dataclass(frozen=True)
class Signature:
    """Function declarations split into database, algorithmic and bridge
    groups, plus the admitted location operators.

    The algorithmic group is static-only; every dynamic symbol lives in
    the database or bridge group, so all locations take database
    arguments.
    """

    functions: Mapping[str, FuncDecl]
    location_operators: tuple[str, ...] = LOCATION_OPERATORS

    @staticmethod
    def make(decls: Iterable[FuncDecl], location_operators=LOCATION_OPERATORS) -> "Signature":
        table: dict[str, FuncDecl] = {}
        decls = list(decls)
        for builtin in ("True", "False"):
            if not any(d.name == builtin for d in decls):
                decls.append(FuncDecl(builtin, DB, 0, dynamic=False))
        for d in decls:
            if d.name in table or d.name in BUILTIN_ALG:
                raise SignatureError(f"duplicate function name {d.name!r}")
            if d.arity < 0:
                raise SignatureError(f"negative arity for {d.name!r}")
            if d.kind == ALG and d.dynamic:
                raise SignatureError(
                    f"{d.name!r}: the algorithmic part is static; "
                    "declare dynamic algorithmic-valued symbols as bridge functions"
                )
            if d.kind not in (DB, ALG, BRIDGE):
                raise SignatureError(f"{d.name!r}: unknown kind {d.kind!r}")
            table[d.name] = d
        for op in location_operators:
            if op not in LOCATION_OPERATORS:
                raise SignatureError(f"unknown location operator {op!r}")
        return Signature(dict(sorted(table.items())), tuple(location_operators))

    def decl(self, name: str) -> FuncDecl:
        try:
            return self.functions[name]
        except KeyError:
            raise SignatureError(f"unknown function name {name!r}") from None

    def has(self, name: str) -> bool:
        return name in self.functions

    def kind(self, name: str) -> str:
        if name in BUILTIN_ALG:
            return ALG
        return self.decl(name).kind

    def arity(self, name: str) -> int:
        if name in BUILTIN_ALG:
            return BUILTIN_ALG[name]
        return self.decl(name).arity

    def is_dynamic(self, name: str) -> bool:
        if name in BUILTIN_ALG:
            return False
        return self.decl(name).dynamic

    def value_sort(self, name: str) -> str:
        """Sort of the values a function yields: DB or ALG."""
        return DB if self.kind(name) == DB else ALG

    def dynamic_functions(self) -> tuple[FuncDecl, ...]:
        return tuple(d for _, d in sorted(self.functions.items()) if d.dynamic)

    def merged_with(self, other: "Signature") -> "Signature":
        decls = dict(self.functions)
        for name, d in other.functions.items():
            if name in decls and decls[name] != d:
                raise SignatureError(f"conflicting declarations for {name!r}")
            decls[name] = d
        ops = tuple(dict.fromkeys(self.location_operators + other.location_operators))
        return Signature.make(decls.values(), ops)


# ---------------------------------------------------------------------------
# Locations and updates


@dataclass(frozen=True)
class Location:
    function: str
    args: tuple[Value, ...]

    def key(self):
        return (self.function, tuple(canon_key(a) for a in self.args))

    def __str__(self):
        return f"({self.function},({','.join(str(a) for a in self.args)}))"


@dataclass(frozen=True)
class Update:
    location: Location
    value: Value

    def key(self):
        return self.location.key() + (canon_key(self.value),)

    def __str__(self):
        args = ",".join(str(a) for a in self.location.args)
        return f"({self.location.function},({args}),{self.value})"


class UpdateSet:
    """A finite set of updates."""

    __slots__ = ("updates",)

    def __init__(self, updates: Iterable[Update] = ()):
        object.__setattr__(self, "updates", frozenset(updates))

    def __setattr__(self, *a):
        raise AttributeError("UpdateSet is immutable")

    def __iter__(self):
        return iter(self.sorted())

    def __len__(self):
        return len(self.updates)

    def __contains__(self, u):
        return u in self.updates

    def __eq__(self, other):
        return isinstance(other, UpdateSet) and self.updates == other.updates

    def __hash__(self):
        return hash(self.updates)

    def key(self):
        return tuple(u.key() for u in self.sorted())

    def sorted(self) -> tuple[Update, ...]:
        return tuple(sorted(self.updates, key=Update.key))

    def locations(self) -> frozenset[Location]:
        return frozenset(u.location for u in self.updates)

    def union(self, other: "UpdateSet") -> "UpdateSet":
        return UpdateSet(self.updates | other.updates)

    def __str__(self):
        return "{" + ",".join(str(u) for u in self.sorted()) + "}"

    __repr__ = __str__


class UpdateMultiset:
    """A finite multiset of updates, stored as update -> positive count."""

    __slots__ = ("entries",)

    def __init__(self, entries: Mapping[Update, int] | Iterable[Update] = ()):
        if isinstance(entries, Mapping):
            items = {u: int(n) for u, n in entries.items() if n}
        else:
            items = {}
            for u in entries:
                items[u] = items.get(u, 0) + 1
        if any(n < 1 for n in items.values()):
            raise ValueError("multiplicities must be positive")
        object.__setattr__(self, "entries", tuple(sorted(items.items(), key=lambda e: e[0].key())))

    def __setattr__(self, *a):
        raise AttributeError("UpdateMultiset is immutable")

    def __eq__(self, other):
        return isinstance(other, UpdateMultiset) and self.entries == other.entries

    def __hash__(self):
        return hash(self.entries)

    def key(self):
        return tuple((u.key(), n) for u, n in self.entries)

    def __len__(self):
        return sum(n for _, n in self.entries)

    def count(self, u: Update) -> int:
        return dict(self.entries).get(u, 0)

    def items(self):
        return self.entries

    def support(self) -> UpdateSet:
        return UpdateSet(u for u, _ in self.entries)

    def locations(self) -> frozenset[Location]:
        return frozenset(u.location for u, _ in self.entries)

    def msum(self, other: "UpdateMultiset") -> "UpdateMultiset":
        merged = dict(self.entries)
        for u, n in other.entries:
            merged[u] = merged.get(u, 0) + n
        return UpdateMultiset(merged)

    def restrict(self, keep) -> "UpdateMultiset":
        return UpdateMultiset({u: n for u, n in self.entries if keep(u)})

    def values_at(self, loc: Location) -> list[Value]:
        """Values updated at loc, with multiplicity."""
        out = []
        for u, n in self.entries:
            if u.location == loc:
                out.extend([u.value] * n)
        return out

    def __str__(self):
        parts = []
        for u, n in self.entries:
            parts.append(str(u) if n == 1 else f"{u}x{n}")
        return "{{" + ",".join(parts) + "}}"

    __repr__ = __str__


def multiset_to_set(dm: UpdateMultiset) -> UpdateSet:
    """Support of the multiset with multiplicities dropped."""
    return dm.support()


def tag_multiset(dm: UpdateMultiset) -> frozenset[tuple]:
    """Encode a multiset as a relation: the k occurrences of an update
    get tags 0..k-1 in canonical update order.

    Rows are (function, args, value, AlgNum(tag)); inverse of untag.
    """
    rows = set()
    for u, n in dm.entries:
        for i in range(n):
            rows.add((u.location.function, u.location.args, u.value, AlgNum(i)))
    return frozenset(rows)


def untag(rel: Iterable[tuple]) -> UpdateMultiset:
    """Decode a tagged relation back to a multiset: the multiplicity of
    an update is the number of distinct tags attached to it."""
    counts: dict[Update, set] = {}
    for f, args, value, tag in rel:
        u = Update(Location(f, tuple(args)), value)
        counts.setdefault(u, set()).add(tag)
    return UpdateMultiset({u: len(tags) for u, tags in counts.items()})


def is_consistent(delta: UpdateSet) -> bool:
    """True iff no two updates assign distinct values to one location."""
    seen: dict[Location, Value] = {}
    for u in delta.updates:
        if u.location in seen and seen[u.location] != u.value:
            return False
        seen[u.location] = u.value
    return True


# ---------------------------------------------------------------------------
# States


@dataclass(frozen=True)
class State:
    """A meta-finite state: finite carrier, per-function interpretations
    with defaults (False for database functions, undef for bridge
    functions), and static algorithmic constants."""

    signature: Signature
    db_carrier: tuple[DbElem, ...]
    interpretations: Mapping[tuple[str, tuple], Value] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        carrier = list(dict.fromkeys(self.db_carrier))
        for designated in (TRUE, FALSE):
            if designated not in carrier:
                carrier.append(designated)
        object.__setattr__(self, "db_carrier", tuple(sorted(carrier, key=canon_key)))
        cleaned = {}
        table = dict(self.interpretations)
        table.setdefault(("True", ()), TRUE)
        table.setdefault(("False", ()), FALSE)
        for (fname, args), value in table.items():
            args = tuple(args)
            self._check_entry(fname, args, value)
            if value != self._default(fname):
                cleaned[(fname, args)] = value
        object.__setattr__(self, "interpretations", cleaned)

    def _default(self, fname: str) -> Value:
        return FALSE if self.signature.kind(fname) == DB else UNDEF

    def _check_entry(self, fname, args, value):
        decl = self.signature.decl(fname)
        if len(args) != decl.arity:
            raise SignatureError(f"{fname!r} expects {decl.arity} arguments, got {len(args)}")
        if decl.kind == ALG:
            if not all(is_alg_value(a) for a in args) or not is_alg_value(value):
                raise SortError(f"{fname!r}: algorithmic function over non-algorithmic values")
            return
        if not all(isinstance(a, DbElem) for a in args):
            raise SortError(f"{fname!r}: database arguments expected")
        bad = [a for a in args if a not in self.db_carrier]
        if bad:
            raise SortError(f"{fname!r}: argument {bad[0]} outside the declared carrier")
        if decl.kind == DB:
            if not isinstance(value, DbElem):
                raise SortError(f"{fname!r}: database value expected, got {value!r}")
            if value not in self.db_carrier:
                raise SortError(f"{fname!r}: value {value} outside the declared carrier")
        else:  # bridge
            if not is_alg_value(value):
                raise SortError(f"{fname!r}: algorithmic value expected, got {value!r}")

    def check_location(self, loc: Location):
        decl = self.signature.decl(loc.function)
        if len(loc.args) != decl.arity:
            raise SignatureError(
                f"{loc.function!r} expects {decl.arity} arguments, got {len(loc.args)}"
            )
        if decl.kind == ALG:
            raise SortError(f"{loc.function!r} is not locatable: algorithmic part is static")
        if not all(isinstance(a, DbElem) for a in loc.args):
            raise SortError(f"location {loc} must take database arguments")

    def raw_lookup(self, fname: str, args: tuple) -> Value:
        if fname in BUILTIN_ALG:
            return apply_builtin(fname, args)
        decl = self.signature.decl(fname)
        if len(args) != decl.arity:
            raise SignatureError(f"{fname!r} expects {decl.arity} arguments, got {len(args)}")
        return self.interpretations.get((fname, tuple(args)), self._default(fname))

    def non_default_entries(self, dynamic_only=False):
        for (fname, args), value in sorted(
            self.interpretations.items(), key=lambda e: (e[0][0], tuple(canon_key(a) for a in e[0][1]))
        ):
            if dynamic_only and not self.signature.is_dynamic(fname):
                continue
            yield fname, args, value

    def dedup_key(self) -> tuple:
        """Canonical serialization of the non-default dynamic entries."""
        return tuple(
            (f, tuple(str(a) for a in args), str(v))
            for f, args, v in self.non_default_entries(dynamic_only=True)
        )

    def with_entries(self, entries: Mapping[tuple[str, tuple], Value]) -> "State":
        merged = dict(self.interpretations)
        merged.update(entries)
        return replace(self, interpretations=merged)

    def full_key(self):
        cached = self.__dict__.get("_full_key")
        if cached is None:
            cached = (
                id(self.signature),
                self.db_carrier,
                tuple(
                    (f, tuple(map(canon_key, args)), canon_key(v))
                    for f, args, v in self.non_default_entries()
                ),
            )
            object.__setattr__(self, "_full_key", cached)
        return cached

    def active_alg_values(self) -> frozenset:
        """Algorithmic values appearing in tables and constants."""
        vals = {UNDEF}
        for _, _, value in self.non_default_entries():
            if is_alg_value(value):
                vals.add(value)
        return frozenset(vals)

    def __str__(self):
        entries = ", ".join(
            f"{f}({','.join(map(str, args))})={v}" for f, args, v in self.non_default_entries()
        )
        return f"State<{entries}>"


@dataclass(frozen=True)
class Valuation:
    """Sort-respecting variable assignment: database variables to
    carrier elements, algorithmic variables to algorithmic values,
    second-order variables to finite relations (frozensets of rows)."""

    db: Mapping[str, DbElem] = field(default_factory=dict)
    alg: Mapping[str, Value] = field(default_factory=dict)
    so: Mapping[str, frozenset] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "db", dict(self.db))
        object.__setattr__(self, "alg", dict(self.alg))
        object.__setattr__(self, "so", dict(self.so))

    def bind_db(self, name: str, value: DbElem) -> "Valuation":
        return Valuation({**self.db, name: value}, self.alg, self.so)

    def bind_alg(self, name: str, value: Value) -> "Valuation":
        return Valuation(self.db, {**self.alg, name: value}, self.so)

    def bind_so(self, name: str, rel) -> "Valuation":
        return Valuation(self.db, self.alg, {**self.so, name: frozenset(rel)})

    def key(self):
        return (
            tuple(sorted((n, canon_key(v)) for n, v in self.db.items())),
            tuple(sorted((n, canon_key(v)) for n, v in self.alg.items())),
            tuple(sorted((n, canon_key(v)) for n, v in self.so.items())),
        )


EMPTY_VALUATION = Valuation()


def apply_builtin(fname: str, args: tuple) -> Value:
    """Interpreted static algorithmic functions; undef propagates."""
    if any(isinstance(a, UndefType) for a in args):
        return UNDEF
    if not all(isinstance(a, AlgNum) for a in args):
        raise SortError(f"builtin {fname!r} over non-algorithmic arguments")
    a, b = (x.value for x in args)
    if fname == "+":
        return AlgNum(a + b)
    if fname == "-":
        return AlgNum(a - b)
    if fname == "<":
        return AlgNum(1 if a < b else 0)
    if fname == "<=":
        return AlgNum(1 if a <= b else 0)
    raise SignatureError(f"unknown builtin {fname!r}")


def lookup(state: State, loc: Location) -> Value:
    """Content of a location: the stored value or the per-function default."""
    state.check_location(loc)
    return state.raw_lookup(loc.function, loc.args)


def apply(state: State, delta: UpdateSet) -> State:
    """Successor state: updated locations take their new values, all
    other locations keep their content. Raises on inconsistent input
    (no successor exists in that case)."""
    if not is_consistent(delta):
        raise InconsistentUpdateSet(f"cannot apply inconsistent update set {delta}")
    entries = dict(state.interpretations)
    for u in delta.updates:
        state.check_location(u.location)
        state._check_entry(u.location.function, u.location.args, u.value)
        key = (u.location.function, u.location.args)
        if u.value == state._default(u.location.function):
            entries.pop(key, None)
        else:
            entries[key] = u.value
    return replace(state, interpretations=entries)
