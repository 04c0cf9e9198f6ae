"""Concrete syntax, abstract syntax, and syntactic operations.

The metalanguage separates value forms from computations and keeps
computations in let-normal form: the only way computations nest is through
``let``.  The parser accepts a liberal expression grammar and desugars it:

    e  ::= let x = e in e | let rec f x = e in e | rec f(x). e | fn x => e
         | if e then e else e | e ; e | e || e | atomic{ e }
         | !e | e := e | ref e | cas(e, e, e) | ? | diverge
         | e e | e + e | e - e | e = e | e .1 | e .2 | e .ele | e .next
         | x | 0 | true | false | null | () | (e, e) | (e) | &X

``&X`` is a location literal.  ``cas(X, a, b)`` desugars to the atomic
check-and-set computation; ``e1 ; e2`` to a let on a fresh variable;
nested computation arguments are hoisted into lets with fresh variables.
Field names map to tuple projections: ``.ele``/``.elem``/``.head`` are
``.1`` and ``.next`` is ``.2``.  After parsing, every bound variable is
distinct.
"""

from __future__ import annotations

from dataclasses import dataclass

from .store import Loc, is_rvalue, rvalue_repr


class LangError(Exception):
    pass


class ParseError(LangError):
    def __init__(self, msg, line=None, col=None):
        where = f" at {line}:{col}" if line is not None else ""
        super().__init__(f"{msg}{where}")
        self.line, self.col = line, col


# --------------------------------------------------------------------------
# Abstract syntax
# --------------------------------------------------------------------------

class Term:
    __slots__ = ()


# value forms

@dataclass(frozen=True)
class Var(Term):
    name: str


@dataclass(frozen=True)
class Lit(Term):
    value: object  # an r-value

    def __post_init__(self):
        if not is_rvalue(self.value):
            raise LangError(f"not an r-value literal: {self.value!r}")


@dataclass(frozen=True)
class Pair(Term):
    fst: Term
    snd: Term


@dataclass(frozen=True)
class Proj(Term):
    tup: Term
    index: int  # 1 or 2


@dataclass(frozen=True)
class Const(Term):
    """A built-in constant, applied via App like any function value."""

    name: str


@dataclass(frozen=True)
class Rec(Term):
    """Recursive function  rec f(x). body ; lambdas are Rec with f unused."""

    fname: str
    param: str
    body: Term


# computation forms

@dataclass(frozen=True)
class Ret(Term):
    value: Term


@dataclass(frozen=True)
class Let(Term):
    var: str
    bound: Term
    body: Term


@dataclass(frozen=True)
class App(Term):
    fun: Term
    arg: Term


@dataclass(frozen=True)
class If(Term):
    cond: Term
    then: Term
    orelse: Term


@dataclass(frozen=True)
class Read(Term):
    target: Term


@dataclass(frozen=True)
class Write(Term):
    target: Term
    payload: Term


@dataclass(frozen=True)
class Ref(Term):
    payload: Term


@dataclass(frozen=True)
class Par(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Atomic(Term):
    body: Term


@dataclass(frozen=True)
class Choice(Term):
    """Nondeterministically chosen boolean, written ``?``."""


@dataclass(frozen=True)
class Diverge(Term):
    """The computation with no traces."""


VALUE_FORMS = (Var, Lit, Pair, Proj, Const, Rec)


def is_value(t: Term) -> bool:
    return isinstance(t, VALUE_FORMS)


def children(t: Term):
    if isinstance(t, (Var, Lit, Const, Choice, Diverge)):
        return ()
    if isinstance(t, Pair):
        return (t.fst, t.snd)
    if isinstance(t, Proj):
        return (t.tup,)
    if isinstance(t, Rec):
        return (t.body,)
    if isinstance(t, Ret):
        return (t.value,)
    if isinstance(t, Let):
        return (t.bound, t.body)
    if isinstance(t, App):
        return (t.fun, t.arg)
    if isinstance(t, If):
        return (t.cond, t.then, t.orelse)
    if isinstance(t, Read):
        return (t.target,)
    if isinstance(t, Write):
        return (t.target, t.payload)
    if isinstance(t, Ref):
        return (t.payload,)
    if isinstance(t, Par):
        return (t.left, t.right)
    if isinstance(t, Atomic):
        return (t.body,)
    raise LangError(f"unknown term {t!r}")


# --------------------------------------------------------------------------
# Built-in constants and their semantic partial functions F_c
# --------------------------------------------------------------------------

def _int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _simple(v):
    return v is None or isinstance(v, (bool, int, Loc)) or (
        isinstance(v, tuple) and all(_simple(x) for x in v))


def _f_add(v):
    if isinstance(v, tuple) and len(v) == 2 and _int(v[0]) and _int(v[1]):
        return v[0] + v[1]
    raise _Undefined


def _f_sub(v):
    if isinstance(v, tuple) and len(v) == 2 and _int(v[0]) and _int(v[1]):
        return v[0] - v[1]
    raise _Undefined


def _f_eq(v):
    if isinstance(v, tuple) and len(v) == 2 and _simple(v[0]) and _simple(v[1]):
        return v[0] == v[1]
    raise _Undefined


def _f_less(v):
    if isinstance(v, tuple) and len(v) == 2 and _int(v[0]) and _int(v[1]):
        return v[0] < v[1]
    raise _Undefined


def _f_mul(v):
    if isinstance(v, tuple) and len(v) == 2 and _int(v[0]) and _int(v[1]):
        return v[0] * v[1]
    raise _Undefined


def _f_div(v):
    if isinstance(v, tuple) and len(v) == 2 and _int(v[0]) and _int(v[1]) and v[1] != 0:
        return v[0] // v[1]
    raise _Undefined


def _f_mod(v):
    if isinstance(v, tuple) and len(v) == 2 and _int(v[0]) and _int(v[1]) and v[1] != 0:
        return v[0] % v[1]
    raise _Undefined


def _f_not(v):
    if isinstance(v, bool):
        return not v
    raise _Undefined


class _Undefined(Exception):
    """F_c undefined on this argument; the application denotes no traces."""


def _disc(pred):
    def f(v):
        if is_rvalue(v):
            return pred(v)
        raise _Undefined
    return f


@dataclass(frozen=True)
class BuiltinConst:
    name: str
    arity: int
    fn: object  # r-value -> r-value, raising _Undefined off-domain


BUILTINS = {
    "+": BuiltinConst("+", 2, _f_add),
    "-": BuiltinConst("-", 2, _f_sub),
    "*": BuiltinConst("*", 2, _f_mul),
    "div": BuiltinConst("div", 2, _f_div),
    "mod": BuiltinConst("mod", 2, _f_mod),
    "=": BuiltinConst("=", 2, _f_eq),
    "<": BuiltinConst("<", 2, _f_less),
    "not": BuiltinConst("not", 1, _f_not),
    "isint": BuiltinConst("isint", 1, _disc(_int)),
    "isbool": BuiltinConst("isbool", 1, _disc(lambda v: isinstance(v, bool))),
    "ispair": BuiltinConst("ispair", 1, _disc(lambda v: isinstance(v, tuple) and len(v) == 2)),
    "isloc": BuiltinConst("isloc", 1, _disc(lambda v: isinstance(v, Loc))),
    "isnull": BuiltinConst("isnull", 1, _disc(lambda v: v is None)),
}

INFIX = ("+", "-", "*", "=", "<")
Undefined = _Undefined


def apply_builtin(name: str, arg):
    """F_c; raises Undefined when outside the declared domain."""
    return BUILTINS[name].fn(arg)


# --------------------------------------------------------------------------
# Lexer
# --------------------------------------------------------------------------

_KEYWORDS = {"let", "rec", "in", "if", "then", "else", "atomic", "ref",
             "true", "false", "null", "cas", "diverge", "fn"}
_PUNCT = ["||", ":=", "=>", "(", ")", "{", "}", ",", ".", ";",
          "!", "?", "=", "+", "-", "*", "<", "&", "\\"]


@dataclass
class _Tok:
    kind: str  # ident int punct keyword eof
    text: str
    line: int
    col: int


def _lex(src: str):
    toks, i, line, col = [], 0, 1, 1
    n = len(src)
    while i < n:
        c = src[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == "#":
            while i < n and src[i] != "\n":
                i += 1
            continue
        matched = None
        for p in _PUNCT:
            if src.startswith(p, i):
                matched = p
                break
        if matched:
            toks.append(_Tok("punct", matched, line, col))
            i += len(matched)
            col += len(matched)
            continue
        if c.isdigit():
            j = i
            while j < n and src[j].isdigit():
                j += 1
            toks.append(_Tok("int", src[i:j], line, col))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            word = src[i:j]
            kind = "keyword" if word in _KEYWORDS else "ident"
            toks.append(_Tok(kind, word, line, col))
            col += j - i
            i = j
            continue
        raise ParseError(f"unexpected character {c!r}", line, col)
    toks.append(_Tok("eof", "", line, col))
    return toks


# --------------------------------------------------------------------------
# Parser (expression tree, then let-normalization)
# --------------------------------------------------------------------------

class _Parser:
    def __init__(self, toks):
        self.toks = toks
        self.pos = 0

    def peek(self, ahead=0) -> _Tok:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> _Tok:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def eat(self, text) -> _Tok:
        t = self.next()
        if t.text != text:
            raise ParseError(f"expected {text!r}, found {t.text or 'end of input'!r}",
                             t.line, t.col)
        return t

    def fail(self, msg):
        t = self.peek()
        raise ParseError(msg, t.line, t.col)

    # precedence, loosest first: ; then || then let/if/rec bodies then := then
    # = < then + - then application then ! and postfix projection.

    def expr(self):
        e = self.par()
        if self.peek().text == ";":
            self.next()
            return ("seq", e, self.expr())
        return e

    def par(self):
        e = self.binder()
        if self.peek().text == "||":
            self.next()
            return ("par", e, self.par())
        return e

    def binder(self):
        t = self.peek()
        if t.text == "atomic":
            self.next()
            self.eat("{")
            e = self.expr()
            self.eat("}")
            return ("atomic", e)
        if t.text == "let":
            self.next()
            if self.peek().text == "rec":
                self.next()
                f = self._ident()
                x = self._ident()
                self.eat("=")
                body = self.expr()
                self.eat("in")
                rest = self.expr()
                return ("let", f, ("rec", f, x, body), rest)
            x = self._ident()
            self.eat("=")
            bound = self.expr()
            self.eat("in")
            return ("let", x, bound, self.expr())
        if t.text == "if":
            self.next()
            c = self.expr()
            self.eat("then")
            a = self.expr()
            self.eat("else")
            return ("if", c, a, self.expr())
        if t.text == "rec":
            self.next()
            f = self._ident()
            self.eat("(")
            x = self._ident()
            self.eat(")")
            self.eat(".")
            return ("rec", f, x, self.expr())
        if t.text == "fn":
            self.next()
            x = self._ident()
            self.eat("=>")
            return ("rec", "_", x, self.expr())
        if t.text == "\\":
            self.next()
            x = self._ident()
            self.eat(".")
            return ("rec", "_", x, self.expr())
        return self.assign()

    def assign(self):
        e = self.cmp()
        if self.peek().text == ":=":
            self.next()
            return ("write", e, self.binder())
        return e

    def cmp(self):
        e = self.add()
        while self.peek().text in ("=", "<"):
            op = self.next().text
            e = ("op", op, e, self.add())
        return e

    def add(self):
        e = self.app()
        while self.peek().text in ("+", "-", "*"):
            op = self.next().text
            e = ("op", op, e, self.app())
        return e

    def app(self):
        e = self.unary()
        while self._starts_atom():
            e = ("app", e, self.unary())
        return e

    def _starts_atom(self) -> bool:
        t = self.peek()
        if t.kind in ("int", "ident"):
            return True
        if t.kind == "keyword" and t.text in ("true", "false", "null", "ref", "cas", "diverge"):
            return True
        return t.text in ("(", "&", "?")

    def unary(self):
        if self.peek().text == "!":
            self.next()
            return self.postfix_of(("read", self.unary_operand()))
        if self.peek().text == "ref":
            self.next()
            return ("ref", self.unary())
        return self.postfix()

    def unary_operand(self):
        # the target of ! is an atom (with its own projections): !p.next
        # means (!p).next, so projections after the atom bind to the read.
        return self.atom()

    def postfix(self):
        return self.postfix_of(self.atom())

    def postfix_of(self, e):
        while self.peek().text == ".":
            self.next()
            t = self.next()
            if t.kind == "int" and t.text in ("1", "2"):
                e = ("proj", int(t.text), e)
            elif t.text in ("ele", "elem", "head"):
                e = ("proj", 1, e)
            elif t.text == "next":
                e = ("proj", 2, e)
            else:
                raise ParseError(f"bad projection .{t.text}", t.line, t.col)
        return e

    def atom(self):
        t = self.next()
        if t.kind == "int":
            return ("lit", int(t.text))
        if t.text == "true":
            return ("lit", True)
        if t.text == "false":
            return ("lit", False)
        if t.text == "null":
            return ("lit", None)
        if t.text == "&":
            name = self._ident()
            return ("lit", Loc(name))
        if t.text == "?":
            return ("choice",)
        if t.text == "diverge":
            return ("diverge",)
        if t.text == "cas":
            self.eat("(")
            a = self.expr()
            self.eat(",")
            b = self.expr()
            self.eat(",")
            c = self.expr()
            self.eat(")")
            return ("cas", a, b, c)
        if t.text == "(":
            if self.peek().text == ")":
                self.next()
                return ("lit", ())
            if self.peek().text in INFIX and self.peek(1).text == ")":
                op = self.next().text
                self.next()
                return ("const", op)
            e = self.expr()
            if self.peek().text == ",":
                self.next()
                e2 = self.expr()
                self.eat(")")
                return ("pair", e, e2)
            self.eat(")")
            return e
        if t.kind == "ident":
            if t.text in BUILTINS and t.text not in INFIX:
                return ("const", t.text)
            return ("var", t.text)
        raise ParseError(f"unexpected {t.text or 'end of input'!r}", t.line, t.col)

    def _ident(self):
        t = self.next()
        if t.kind != "ident":
            raise ParseError(f"expected identifier, found {t.text!r}", t.line, t.col)
        return t.text


# --------------------------------------------------------------------------
# Let-normalization of the expression tree
# --------------------------------------------------------------------------

class _Norm:
    def __init__(self):
        self.counter = 0

    def fresh(self) -> str:
        self.counter += 1
        return f"_t{self.counter}"

    def comp(self, e) -> Term:
        """Normalize an expression as a computation."""
        tag = e[0]
        if tag == "seq":
            return Let(self.fresh(), self.comp(e[1]), self.comp(e[2]))
        if tag == "par":
            return Par(self.comp(e[1]), self.comp(e[2]))
        if tag == "let":
            return Let(e[1], self.comp(e[2]), self.comp(e[3]))
        if tag == "if":
            bind, v = self.value(e[1])
            return self._wrap(bind, If(v, self.comp(e[2]), self.comp(e[3])))
        if tag == "write":
            bind1, tgt = self.value(e[1])
            bind2, val = self.value(e[2])
            return self._wrap(bind1 + bind2, Write(tgt, val))
        if tag == "read":
            bind, v = self.value(e[1])
            return self._wrap(bind, Read(v))
        if tag == "ref":
            bind, v = self.value(e[1])
            return self._wrap(bind, Ref(v))
        if tag == "app":
            bind1, f = self.value(e[1])
            bind2, a = self.value(e[2])
            return self._wrap(bind1 + bind2, App(f, a))
        if tag == "op":
            bind1, a = self.value(e[2])
            bind2, b = self.value(e[3])
            return self._wrap(bind1 + bind2, App(Const(e[1]), Pair(a, b)))
        if tag == "atomic":
            return Atomic(self.comp(e[1]))
        if tag == "choice":
            return Choice()
        if tag == "diverge":
            return Diverge()
        if tag == "cas":
            bind1, l = self.value(e[1])
            bind2, old = self.value(e[2])
            bind3, new = self.value(e[3])
            y, t = self.fresh(), self.fresh()
            body = Let(y, Read(l),
                       Let(t, App(Const("="), Pair(Var(y), old)),
                           If(Var(t),
                              Let(self.fresh(), Write(l, new), Ret(Lit(True))),
                              Ret(Lit(False)))))
            return self._wrap(bind1 + bind2 + bind3, Atomic(body))
        # value forms as computations
        bind, v = self.value(e)
        return self._wrap(bind, Ret(v))

    def value(self, e) -> tuple[list, Term]:
        """Normalize an expression as a value form, hoisting computations."""
        tag = e[0]
        if tag == "var":
            return [], Var(e[1])
        if tag == "lit":
            return [], Lit(e[1])
        if tag == "const":
            return [], Const(e[1])
        if tag == "rec":
            return [], Rec(e[1], e[2], self.comp(e[3]))
        if tag == "pair":
            b1, v1 = self.value(e[1])
            b2, v2 = self.value(e[2])
            return b1 + b2, Pair(v1, v2)
        if tag == "proj":
            b, v = self.value(e[2])
            return b, Proj(v, e[1])
        # a genuine computation in value position: hoist
        c = self.comp(e)
        x = self.fresh()
        return [(x, c)], Var(x)

    @staticmethod
    def _wrap(bindings, body: Term) -> Term:
        for x, c in reversed(bindings):
            body = Let(x, c, body)
        return body


def _freshen(t: Term) -> Term:
    """Rename binders so every bound variable is distinct."""
    used: set[str] = set()

    def pick(x: str) -> str:
        if x not in used:
            used.add(x)
            return x
        i = 2
        while f"{x}_{i}" in used:
            i += 1
        y = f"{x}_{i}"
        used.add(y)
        return y

    def go(t: Term, ren: dict) -> Term:
        if isinstance(t, Var):
            return Var(ren.get(t.name, t.name))
        if isinstance(t, (Lit, Const, Choice, Diverge)):
            return t
        if isinstance(t, Pair):
            return Pair(go(t.fst, ren), go(t.snd, ren))
        if isinstance(t, Proj):
            return Proj(go(t.tup, ren), t.index)
        if isinstance(t, Rec):
            f2 = pick(t.fname)
            ren2 = dict(ren)
            ren2[t.fname] = f2
            x2 = pick(t.param)
            ren2[t.param] = x2
            return Rec(f2, x2, go(t.body, ren2))
        if isinstance(t, Ret):
            return Ret(go(t.value, ren))
        if isinstance(t, Let):
            bound = go(t.bound, ren)
            x2 = pick(t.var)
            ren2 = dict(ren)
            ren2[t.var] = x2
            return Let(x2, bound, go(t.body, ren2))
        if isinstance(t, App):
            return App(go(t.fun, ren), go(t.arg, ren))
        if isinstance(t, If):
            return If(go(t.cond, ren), go(t.then, ren), go(t.orelse, ren))
        if isinstance(t, Read):
            return Read(go(t.target, ren))
        if isinstance(t, Write):
            return Write(go(t.target, ren), go(t.payload, ren))
        if isinstance(t, Ref):
            return Ref(go(t.payload, ren))
        if isinstance(t, Par):
            return Par(go(t.left, ren), go(t.right, ren))
        if isinstance(t, Atomic):
            return Atomic(go(t.body, ren))
        raise LangError(f"unknown term {t!r}")

    return go(t, {})


def parse(text: str) -> Term:
    """Parse concrete syntax into a let-normal, alpha-freshened Term."""
    p = _Parser(_lex(text))
    tree = p.expr()
    if p.peek().kind != "eof":
        p.fail(f"trailing input {p.peek().text!r}")
    return _freshen(_Norm().comp(tree))


# --------------------------------------------------------------------------
# Pretty-printing (round-trips through parse)
# --------------------------------------------------------------------------

def _pp_value(v: Term) -> str:
    if isinstance(v, Var):
        return v.name
    if isinstance(v, Lit):
        if isinstance(v.value, Loc):
            return f"&{v.value.name}"
        return rvalue_repr(v.value)
    if isinstance(v, Const):
        return f"({v.name})" if v.name in INFIX else v.name
    if isinstance(v, Pair):
        return f"({_pp_value(v.fst)}, {_pp_value(v.snd)})"
    if isinstance(v, Proj):
        base = _pp_value(v.tup)
        if isinstance(v.tup, (Pair, Rec)):
            base = f"({base})"
        return f"{base}.{v.index}"
    if isinstance(v, Rec):
        return f"rec {v.fname}({v.param}). {pretty(v.body)}"
    raise LangError(f"not a value form: {v!r}")


def _pp_atom(v: Term) -> str:
    s = _pp_value(v)
    if isinstance(v, Rec):
        return f"({s})"
    return s


def pretty(t: Term) -> str:
    if is_value(t):
        return _pp_value(t)
    if isinstance(t, Ret):
        return _pp_value(t.value)
    if isinstance(t, Let):
        bound = pretty(t.bound)
        if isinstance(t.bound, (Let, If, Par)):
            bound = f"({bound})"
        return f"let {t.var} = {bound} in {pretty(t.body)}"
    if isinstance(t, App):
        if isinstance(t.fun, Const) and t.fun.name in INFIX and isinstance(t.arg, Pair):
            return f"{_pp_atom(t.arg.fst)} {t.fun.name} {_pp_atom(t.arg.snd)}"
        return f"{_pp_atom(t.fun)} {_pp_atom(t.arg)}"
    if isinstance(t, If):
        return f"if {_pp_value(t.cond)} then ({pretty(t.then)}) else ({pretty(t.orelse)})"
    if isinstance(t, Read):
        return f"!{_pp_atom(t.target)}"
    if isinstance(t, Write):
        return f"{_pp_atom(t.target)} := {_pp_atom(t.payload)}"
    if isinstance(t, Ref):
        return f"ref {_pp_atom(t.payload)}"
    if isinstance(t, Par):
        return f"({pretty(t.left)}) || ({pretty(t.right)})"
    if isinstance(t, Atomic):
        return f"atomic{{ {pretty(t.body)} }}"
    if isinstance(t, Choice):
        return "?"
    if isinstance(t, Diverge):
        return "diverge"
    raise LangError(f"unknown term {t!r}")


# --------------------------------------------------------------------------
# Free variables and substitution
# --------------------------------------------------------------------------

def free_vars(t: Term) -> frozenset:
    if isinstance(t, Var):
        return frozenset([t.name])
    if isinstance(t, Rec):
        return free_vars(t.body) - {t.fname, t.param}
    if isinstance(t, Let):
        return free_vars(t.bound) | (free_vars(t.body) - {t.var})
    out = frozenset()
    for c in children(t):
        out |= free_vars(c)
    return out


def alpha_equal(a: Term, b: Term) -> bool:
    """Equality of terms up to renaming of bound variables."""

    def go(a, b, ra, rb, depth):
        if type(a) is not type(b):
            return False
        if isinstance(a, Var):
            ia, ib = ra.get(a.name, a.name), rb.get(b.name, b.name)
            return ia == ib
        if isinstance(a, (Lit, Const)):
            return a == b
        if isinstance(a, Rec):
            ra2 = {**ra, a.fname: ("b", depth), a.param: ("b", depth + 1)}
            rb2 = {**rb, b.fname: ("b", depth), b.param: ("b", depth + 1)}
            return go(a.body, b.body, ra2, rb2, depth + 2)
        if isinstance(a, Let):
            if not go(a.bound, b.bound, ra, rb, depth):
                return False
            ra2 = {**ra, a.var: ("b", depth)}
            rb2 = {**rb, b.var: ("b", depth)}
            return go(a.body, b.body, ra2, rb2, depth + 1)
        if isinstance(a, Proj) and a.index != b.index:
            return False
        ka, kb = children(a), children(b)
        return len(ka) == len(kb) and all(
            go(x, y, ra, rb, depth) for x, y in zip(ka, kb))

    return go(a, b, {}, {}, 0)


def substitute(t: Term, x: str, v: Term) -> Term:
    """Capture-avoiding substitution of closed value form ``v`` for ``x``."""
    if not is_value(v):
        raise LangError(f"substitution payload is not a value form: {v!r}")
    if free_vars(v):
        raise LangError("substitution payload must be closed")

    def go(t: Term) -> Term:
        if isinstance(t, Var):
            return v if t.name == x else t
        if isinstance(t, (Lit, Const, Choice, Diverge)):
            return t
        if isinstance(t, Rec):
            if x in (t.fname, t.param):
                return t
            return Rec(t.fname, t.param, go(t.body))
        if isinstance(t, Let):
            body = t.body if t.var == x else go(t.body)
            return Let(t.var, go(t.bound), body)
        if isinstance(t, Pair):
            return Pair(go(t.fst), go(t.snd))
        if isinstance(t, Proj):
            return Proj(go(t.tup), t.index)
        if isinstance(t, Ret):
            return Ret(go(t.value))
        if isinstance(t, App):
            return App(go(t.fun), go(t.arg))
        if isinstance(t, If):
            return If(go(t.cond), go(t.then), go(t.orelse))
        if isinstance(t, Read):
            return Read(go(t.target))
        if isinstance(t, Write):
            return Write(go(t.target), go(t.payload))
        if isinstance(t, Ref):
            return Ref(go(t.payload))
        if isinstance(t, Par):
            return Par(go(t.left), go(t.right))
        if isinstance(t, Atomic):
            return Atomic(go(t.body))
        raise LangError(f"unknown term {t!r}")

    return go(t)
