"""Tokenizer and recursive-descent parsers for the rule DSL, the
formula DSL, machine files (.dbasm) and state files (.dbstate).

Conventions: lowercase identifiers are database variables unless they
are declared functions; ``$name`` is an algorithmic variable; other
undeclared capitalized identifiers in second-order positions are
second-order variables, whose sort is inferred from use or written
explicitly as ``forall X:Xm (...)``.
"""

from __future__ import annotations

from fractions import Fraction

from . import ast as A
from .errors import ParseError, SignatureError, SortError
from .state import (
    ALG,
    BRIDGE,
    DB,
    UNDEF,
    AlgNum,
    DbElem,
    FuncDecl,
    Signature,
    State,
    LOCATION_OPERATORS,
)

RESERVED = {
    "par", "endpar", "seq", "endseq", "if", "then", "endif", "forall",
    "choose", "with", "do", "enddo", "let", "endlet", "in", "and", "or",
    "not", "implies", "exists", "rho", "true", "false", "upd", "upm",
}

SYMBOLS = [
    ":=", "<=", ">=", "!=", "~>", "->", "(", ")", "{", "}", "[", "]",
    ",", ":", "=", "<", ">", "+", "-", "|", "@", "/",
]


class Token:
    __slots__ = ("kind", "value", "line", "col")

    def __init__(self, kind, value, line, col):
        self.kind = kind
        self.value = value
        self.line = line
        self.col = col

    def __repr__(self):
        return f"Token({self.kind},{self.value!r})"


def tokenize(text: str) -> list[Token]:
    tokens = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c.isspace():
            i += 1
            col += 1
            continue
        if c == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if text.startswith("db-carrier", i):
            tokens.append(Token("NAME", "db-carrier", line, col))
            i += len("db-carrier")
            col += len("db-carrier")
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] in "_'"):
                j += 1
            tokens.append(Token("NAME", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(Token("NUMBER", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if c == "$":
            j = i + 1
            if j >= n or not (text[j].isalpha() or text[j] == "_"):
                raise ParseError("expected a name after '$'", line, col)
            k = j
            while k < n and (text[k].isalnum() or text[k] in "_'"):
                k += 1
            tokens.append(Token("ALGVAR", text[j:k], line, col))
            col += k - i
            i = k
            continue
        for sym in SYMBOLS:
            if text.startswith(sym, i):
                tokens.append(Token("SYM", sym, line, col))
                i += len(sym)
                col += len(sym)
                break
        else:
            raise ParseError(f"unexpected character {c!r}", line, col)
    tokens.append(Token("EOF", "", line, col))
    return tokens


class Parser:
    def __init__(self, text: str, sig: Signature | None = None, context_rule=None):
        self.tokens = tokenize(text)
        self.pos = 0
        self.sig = sig
        self.context_rule = context_rule
        # open second-order binder scopes: [name, annotated sort or None,
        # set of inferred sorts]
        self.so_scopes: list[list] = []

    # -- token plumbing ----------------------------------------------------

    def peek(self, ahead=0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def error(self, message):
        tok = self.peek()
        raise ParseError(message, tok.line, tok.col)

    def at_sym(self, *values) -> bool:
        tok = self.peek()
        return tok.kind == "SYM" and tok.value in values

    def at_name(self, *values) -> bool:
        tok = self.peek()
        return tok.kind == "NAME" and (not values or tok.value in values)

    def expect_sym(self, value) -> Token:
        if not self.at_sym(value):
            self.error(f"expected {value!r}, found {self.peek().value!r}")
        return self.next()

    def expect_name(self, value=None) -> Token:
        tok = self.peek()
        if tok.kind != "NAME" or (value is not None and tok.value != value):
            self.error(f"expected {value or 'a name'!r}, found {tok.value!r}")
        return self.next()

    def expect_eof(self):
        if self.peek().kind != "EOF":
            self.error(f"unexpected trailing input {self.peek().value!r}")

    # -- names -------------------------------------------------------------

    def is_function(self, name: str) -> bool:
        return self.sig is not None and (self.sig.has(name) or name in ("True", "False"))

    def fresh_ident(self, name: str, tok: Token):
        if name in RESERVED:
            raise ParseError(f"{name!r} is a reserved word", tok.line, tok.col)

    # -- terms ---------------------------------------------------------------

    def parse_term(self) -> A.Term:
        left = self.parse_primary_term()
        while self.at_sym("+", "-"):
            op = self.next().value
            right = self.parse_primary_term()
            left = A.Apply(op, (left, right))
        return left

    def parse_number(self) -> A.Num:
        tok = self.next()
        num = Fraction(int(tok.value))
        if self.at_sym("/") and self.peek(1).kind == "NUMBER":
            self.next()
            den = int(self.next().value)
            if den == 0:
                raise ParseError("zero denominator", tok.line, tok.col)
            num = Fraction(num, den)
        return A.Num(AlgNum(num))

    def parse_primary_term(self) -> A.Term:
        tok = self.peek()
        if tok.kind == "NUMBER":
            return self.parse_number()
        if self.at_sym("-") and self.peek(1).kind == "NUMBER":
            self.next()
            n = self.parse_number()
            return A.Num(AlgNum(-n.value.value))
        if tok.kind == "ALGVAR":
            self.next()
            return A.AlgVar(tok.value)
        if self.at_sym("("):
            self.next()
            t = self.parse_term()
            self.expect_sym(")")
            return t
        if self.at_name("rho"):
            return self.parse_rho()
        if tok.kind == "NAME":
            self.next()
            self.fresh_ident(tok.value, tok)
            if self.at_sym("("):
                args = self.parse_term_args()
                if not self.is_function(tok.value):
                    self.error(f"unknown function {tok.value!r}")
                return A.Apply(tok.value, tuple(args))
            if self.is_function(tok.value):
                return A.Apply(tok.value, ())
            return A.DbVar(tok.value)
        self.error(f"expected a term, found {tok.value!r}")

    def parse_term_args(self) -> list:
        self.expect_sym("(")
        args = []
        if not self.at_sym(")"):
            args.append(self.parse_term())
            while self.at_sym(","):
                self.next()
                args.append(self.parse_term())
        self.expect_sym(")")
        return args

    def parse_rho(self) -> A.RhoTerm:
        self.expect_name("rho")
        self.expect_sym("[")
        op = self.expect_name().value
        if op not in LOCATION_OPERATORS:
            self.error(f"unknown location operator {op!r}")
        self.expect_sym("]")
        var = self.expect_name().value
        self.expect_sym("(")
        body = self.parse_term()
        self.expect_sym("|")
        guard = self.parse_formula_expr()
        self.expect_sym(")")
        return A.RhoTerm(op, var, body, guard)

    # -- formulae ------------------------------------------------------------

    def parse_formula_expr(self) -> A.Formula:
        return self.parse_implies()

    def parse_implies(self) -> A.Formula:
        left = self.parse_or()
        if self.at_name("implies"):
            self.next()
            right = self.parse_implies()
            return A.Implies(left, right)
        return left

    def parse_or(self) -> A.Formula:
        left = self.parse_and()
        while self.at_name("or"):
            self.next()
            left = A.Or(left, self.parse_and())
        return left

    def parse_and(self) -> A.Formula:
        left = self.parse_unary_formula()
        while self.at_name("and"):
            self.next()
            left = A.And(left, self.parse_unary_formula())
        return left

    def parse_unary_formula(self) -> A.Formula:
        if self.at_name("not"):
            self.next()
            return A.Not(self.parse_unary_formula())
        if self.at_name("forall", "exists"):
            return self.parse_quantifier()
        if self.at_sym("["):
            self.next()
            var = self.expect_name().value
            self.expect_sym("]")
            self._note_so(var, "X")
            return A.Modal(var, self.parse_unary_formula())
        return self.parse_atom()

    def parse_quantifier(self) -> A.Formula:
        kind = self.next().value
        binders = [self.parse_binder()]
        while self.at_sym(","):
            self.next()
            binders.append(self.parse_binder())
        self.expect_sym("(")
        for b in binders:
            if b[0] == "so":
                self.so_scopes.append([b[1], b[2], set()])
        body = self.parse_formula_expr()
        self.expect_sym(")")
        for b in reversed(binders):
            if b[0] == "so":
                name, annotated, inferred = self.so_scopes.pop()
                sort = annotated or (sorted(inferred)[0] if inferred else None)
                if sort is None:
                    self.error(
                        f"cannot infer the sort of {name!r}; annotate as {name}:X etc."
                    )
                body = (
                    A.ForallSO(name, sort, body)
                    if kind == "forall"
                    else A.ExistsSO(name, sort, body)
                )
            elif b[0] == "alg":
                body = A.ForallAlg(b[1], body) if kind == "forall" else A.ExistsAlg(b[1], body)
            else:
                body = A.ForallDb(b[1], body) if kind == "forall" else A.ExistsDb(b[1], body)
        return body

    def parse_binder(self):
        tok = self.peek()
        if tok.kind == "ALGVAR":
            self.next()
            return ("alg", tok.value)
        name = self.expect_name().value
        self.fresh_ident(name, tok)
        if self.is_function(name):
            self.error(f"{name!r} is a declared function, not a variable")
        if self._looks_so(name):
            sort = None
            if self.at_sym(":"):
                self.next()
                sort = self.expect_name().value
                if sort not in A.SO_SORTS:
                    self.error(f"unknown second-order sort {sort!r}")
            return ("so", name, sort)
        return ("db", name)

    @staticmethod
    def _looks_so(name: str) -> bool:
        return name[0].isupper()

    def _note_so(self, var: str, sort: str):
        for scope in reversed(self.so_scopes):
            if scope[0] == var:
                scope[2].add(sort)
                return

    def parse_atom(self) -> A.Formula:
        if self.at_name("true"):
            self.next()
            return A.TrueF()
        if self.at_name("false"):
            self.next()
            return A.FalseF()
        if self.at_name("upd") or self.at_name("upm"):
            return self.parse_upd_atom()
        if self.at_sym("("):
            # May open a formula or a term; try formula first.
            saved = self.pos
            self.next()
            try:
                phi = self.parse_formula_expr()
                self.expect_sym(")")
                return phi
            except ParseError:
                self.pos = saved
                return self.parse_comparison()
        tok = self.peek()
        if tok.kind == "NAME" and not self.is_function(tok.value) and self._looks_so(tok.value):
            if self.peek(1).kind == "SYM" and self.peek(1).value == "(":
                return self.parse_so_atom()
        return self.parse_comparison()

    def parse_upd_atom(self) -> A.Formula:
        which = self.next().value
        self.expect_sym("(")
        if self.at_sym("@"):
            self.next()
            self.expect_name("rule")
            if self.context_rule is None:
                self.error("no context rule available for '@rule'")
            rule = self.context_rule
        elif self.at_sym("{"):
            self.next()
            rule = self.parse_rule_expr()
            self.expect_sym("}")
        else:
            self.error("expected '@rule' or '{ rule }'")
        self.expect_sym(",")
        var = self.expect_name().value
        self.expect_sym(")")
        sort = "X" if which == "upd" else "Xm"
        self._note_so(var, sort)
        return A.Upd(rule, var) if which == "upd" else A.Upm(rule, var)

    def parse_so_atom(self) -> A.Formula:
        var = self.expect_name().value
        self.expect_sym("(")
        first = self.peek()
        fname = None
        terms = []
        if (
            first.kind == "NAME"
            and self.is_function(first.value)
            and self.sig.is_dynamic(first.value)
            and self.peek(1).kind == "SYM"
            and self.peek(1).value == ","
        ):
            fname = self.next().value
            self.expect_sym(",")
        while not self.at_sym(")"):
            if self.at_sym("("):
                # an argument tuple written (t1,...,tn); flatten it
                self.next()
                if not self.at_sym(")"):
                    terms.append(self.parse_term())
                    while self.at_sym(","):
                        self.next()
                        terms.append(self.parse_term())
                self.expect_sym(")")
            else:
                terms.append(self.parse_term())
            if self.at_sym(","):
                self.next()
        self.expect_sym(")")
        sort = self._infer_so_sort(var, fname, terms)
        self._note_so(var, sort)
        return A.SOAtom(var, sort, fname, tuple(terms))

    def _term_sort(self, t) -> str:
        try:
            return A.check_term(t, self.sig)
        except (SortError, SignatureError):
            return DB

    def _infer_so_sort(self, var, fname, terms) -> str:
        if fname is None:
            if len(terms) != 2:
                self.error(f"atom for {var!r} without a function needs two components")
            return "M"
        arity = self.sig.arity(fname)
        rest = len(terms) - arity
        if rest == 1:
            return "X"
        if rest == 2:
            return "Xm" if self._term_sort(terms[-1]) == ALG else "Xb"
        if rest == 3:
            return "Xmb"
        if len(terms) == 2 * arity + 5:
            return "G" if self._term_sort(terms[-1]) == ALG else "F"
        self.error(f"atom for {var!r} has no admissible component count")

    def parse_comparison(self) -> A.Formula:
        left = self.parse_term()
        if self.at_sym("=", "!=", "<", "<=", ">", ">="):
            op = self.next().value
            right = self.parse_term()
            return self._comparison(op, left, right)
        # Relation/proposition sugar: a database-valued application used
        # as an atom means equality with True.
        if isinstance(left, A.Apply) and self.sig is not None:
            if left.fname not in ("True", "False") and self.sig.kind(left.fname) == DB:
                return A.Eq(left, A.Apply("True", ()))
        self.error("expected a comparison or relation atom")

    @staticmethod
    def _comparison(op, left, right) -> A.Formula:
        one = A.Num(AlgNum(1))
        if op == "=":
            return A.Eq(left, right)
        if op == "!=":
            return A.Not(A.Eq(left, right))
        if op == "<":
            return A.Eq(A.Apply("<", (left, right)), one)
        if op == "<=":
            return A.Eq(A.Apply("<=", (left, right)), one)
        if op == ">":
            return A.Eq(A.Apply("<", (right, left)), one)
        if op == ">=":
            return A.Eq(A.Apply("<=", (right, left)), one)
        raise AssertionError(op)

    # -- rules ---------------------------------------------------------------

    def parse_rule_expr(self) -> A.Rule:
        if self.at_name("par"):
            self.next()
            rules = [self.parse_rule_expr()]
            while not self.at_name("endpar"):
                rules.append(self.parse_rule_expr())
            self.expect_name("endpar")
            if len(rules) < 2:
                self.error("par needs at least two rules")
            return self._nest(A.Par, rules)
        if self.at_name("seq"):
            self.next()
            rules = [self.parse_rule_expr()]
            while not self.at_name("endseq"):
                rules.append(self.parse_rule_expr())
            self.expect_name("endseq")
            if len(rules) < 2:
                self.error("seq needs at least two rules")
            return self._nest(A.Seq, rules)
        if self.at_name("if"):
            self.next()
            guard = self.parse_formula_expr()
            self.expect_name("then")
            rule = self.parse_rule_expr()
            self.expect_name("endif")
            return A.If(guard, rule)
        if self.at_name("forall") or self.at_name("choose"):
            kind = self.next().value
            names = [self.expect_name().value]
            while self.at_sym(","):
                self.next()
                names.append(self.expect_name().value)
            self.expect_name("with")
            guard = self.parse_formula_expr()
            self.expect_name("do")
            rule = self.parse_rule_expr()
            self.expect_name("enddo")
            return self._nest_binders(kind, names, guard, rule)
        if self.at_name("let"):
            self.next()
            self.expect_sym("(")
            fname = self.expect_name().value
            self.expect_sym(",")
            self.expect_sym("(")
            args = []
            if not self.at_sym(")"):
                args.append(self.parse_term())
                while self.at_sym(","):
                    self.next()
                    args.append(self.parse_term())
            self.expect_sym(")")
            self.expect_sym(")")
            self.expect_sym("~>")
            op = self.expect_name().value
            if op not in LOCATION_OPERATORS:
                self.error(f"unknown location operator {op!r}")
            self.expect_name("in")
            rule = self.parse_rule_expr()
            self.expect_name("endlet")
            return A.Let(fname, tuple(args), op, rule)
        # assignment
        tok = self.expect_name()
        self.fresh_ident(tok.value, tok)
        if self.sig is not None and not self.sig.has(tok.value):
            self.error(f"unknown function {tok.value!r}")
        args = self.parse_term_args() if self.at_sym("(") else []
        self.expect_sym(":=")
        rhs = self.parse_term()
        return A.Assign(tok.value, tuple(args), rhs)

    @staticmethod
    def _nest(cls, rules):
        out = rules[-1]
        for r in reversed(rules[:-1]):
            out = cls(r, out)
        return out

    def _nest_binders(self, kind, names, guard, rule) -> A.Rule:
        cls = A.ForallRule if kind == "forall" else A.Choose
        out = cls(names[-1], guard, rule)
        for i in range(len(names) - 2, -1, -1):
            # outer binders guard with the existential closure over the
            # remaining bound variables
            inner_guard = guard
            for n in names[i + 1 :]:
                inner_guard = A.ExistsDb(n, inner_guard)
            out = cls(names[i], inner_guard, out)
        return out


# ---------------------------------------------------------------------------
# Entry points


def parse_rule(text: str, sig: Signature, check=True) -> A.Rule:
    p = Parser(text, sig)
    rule = p.parse_rule_expr()
    p.expect_eof()
    if check:
        A.check_rule(rule, sig)
    return rule


def parse_formula(text: str, sig: Signature, context_rule=None, check=True) -> A.Formula:
    p = Parser(text, sig, context_rule)
    phi = p.parse_formula_expr()
    p.expect_eof()
    if check:
        A.check_formula(phi, sig)
    return phi


def parse_term(text: str, sig: Signature) -> A.Term:
    p = Parser(text, sig)
    t = p.parse_term()
    p.expect_eof()
    A.check_term(t, sig)
    return t


# ---------------------------------------------------------------------------
# Signature blocks


def _parse_signature_block(p: Parser) -> Signature:
    p.expect_name("signature")
    p.expect_sym("{")
    decls = []
    ops = list(LOCATION_OPERATORS)
    while not p.at_sym("}"):
        head = p.expect_name().value
        if head == "operators":
            p.expect_sym("{")
            ops = []
            while not p.at_sym("}"):
                op = p.expect_name().value
                if op not in LOCATION_OPERATORS:
                    p.error(f"unknown location operator {op!r}")
                ops.append(op)
            p.expect_sym("}")
            continue
        if head not in (DB, ALG, BRIDGE):
            p.error(f"expected 'db', 'alg', 'bridge' or 'operators', found {head!r}")
        name = p.expect_name().value
        p.expect_sym("/")
        arity = int(p.next().value)
        dynamic = False
        if p.at_name("dynamic"):
            p.next()
            dynamic = True
        elif p.at_name("static"):
            p.next()
        decls.append(FuncDecl(name, head, arity, dynamic))
    p.expect_sym("}")
    return Signature.make(decls, tuple(ops) or LOCATION_OPERATORS)


# ---------------------------------------------------------------------------
# Machine files


class MachineFile:
    def __init__(self, name, signature, init_predicate, final_predicate, rule):
        self.name = name
        self.signature = signature
        self.init_predicate = init_predicate
        self.final_predicate = final_predicate
        self.rule = rule


def parse_machine(text: str) -> MachineFile:
    p = Parser(text)
    p.expect_name("machine")
    name = p.expect_name().value
    sig = _parse_signature_block(p)
    p.sig = sig
    sections = {}
    for section in ("init", "final", "rule"):
        p.expect_name(section)
        p.expect_sym("{")
        if section == "rule":
            sections[section] = p.parse_rule_expr()
        else:
            sections[section] = p.parse_formula_expr()
        p.expect_sym("}")
    p.expect_eof()
    for key in ("init", "final"):
        if not A.is_pure(sections[key]):
            raise ParseError(f"{key} predicate must be a pure formula")
        A.check_formula(sections[key], sig)
    A.check_rule(sections["rule"], sig)
    if not A.is_closed_rule(sections["rule"]):
        raise ParseError("machine rule must be closed")
    return MachineFile(name, sig, sections["init"], sections["final"], sections["rule"])


# ---------------------------------------------------------------------------
# State files


def parse_state(text: str, sig: Signature | None = None) -> State:
    p = Parser(text)
    name = ""
    if p.at_name("state"):
        p.next()
        name = p.expect_name().value
    if p.at_name("signature"):
        file_sig = _parse_signature_block(p)
        sig = sig.merged_with(file_sig) if sig is not None else file_sig
    if sig is None:
        p.error("state file lacks a signature and none was supplied")
    p.sig = sig

    carrier = []
    entries = {}

    def parse_elem() -> DbElem:
        return DbElem(p.expect_name().value)

    def parse_value_alg():
        if p.at_name("undef"):
            p.next()
            return UNDEF
        neg = False
        if p.at_sym("-"):
            p.next()
            neg = True
        tok = p.next()
        if tok.kind != "NUMBER":
            p.error("expected a number or 'undef'")
        num = Fraction(int(tok.value))
        if p.at_sym("/"):
            p.next()
            num = Fraction(num, int(p.next().value))
        return AlgNum(-num if neg else num)

    while p.peek().kind != "EOF":
        head = p.expect_name().value
        if head in ("db-carrier", "carrier"):
            p.expect_sym("{")
            while not p.at_sym("}"):
                carrier.append(parse_elem())
            p.expect_sym("}")
        elif head == "rel":
            fname = p.expect_name().value
            decl = sig.decl(fname)
            p.expect_sym("{")
            while not p.at_sym("}"):
                p.expect_sym("(")
                row = []
                while not p.at_sym(")"):
                    row.append(parse_elem())
                p.expect_sym(")")
                if len(row) != decl.arity:
                    p.error(f"{fname!r} expects {decl.arity} columns")
                entries[(fname, tuple(row))] = DbElem("True")
            p.expect_sym("}")
        elif head == "fn":
            fname = p.expect_name().value
            decl = sig.decl(fname)
            p.expect_sym("{")
            while not p.at_sym("}"):
                p.expect_sym("(")
                row = []
                while not p.at_sym(")"):
                    row.append(parse_elem())
                p.expect_sym(")")
                p.expect_sym("->")
                entries[(fname, tuple(row))] = parse_elem()
            p.expect_sym("}")
        elif head == "bridge":
            fname = p.expect_name().value
            p.expect_sym("{")
            while not p.at_sym("}"):
                p.expect_sym("(")
                row = []
                while not p.at_sym(")"):
                    row.append(parse_elem())
                p.expect_sym(")")
                p.expect_sym("->")
                entries[(fname, tuple(row))] = parse_value_alg()
            p.expect_sym("}")
        elif head == "const":
            fname = p.expect_name().value
            decl = sig.decl(fname)
            p.expect_sym("=")
            if decl.kind == ALG or decl.kind == BRIDGE:
                entries[(fname, ())] = parse_value_alg()
            else:
                entries[(fname, ())] = parse_elem()
        else:
            p.error(f"unknown section {head!r}")
    p.expect_eof()
    entries[("True", ())] = DbElem("True")
    entries[("False", ())] = DbElem("False")
    return State(sig, tuple(carrier), entries, name=name)
