"""Infinitary lambda terms.

Finite terms are plain trees. Infinite terms are restricted to regular ones,
written with ``rec X. body`` where occurrences of ``X`` inside ``body`` point
back at the binder. Positions are tuples of tracks: 0 for an abstraction
body, 1 for the left side of an application and 2 for its argument.
"""
from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator

Position = tuple


class TermError(Exception):
    pass


class PositionOutOfSupport(TermError):
    def __init__(self, pos, detail=""):
        self.pos = pos
        msg = f"position {format_position(pos)} is not in the support"
        super().__init__(msg + (f" ({detail})" if detail else ""))


class NotARedex(TermError):
    def __init__(self, pos):
        self.pos = pos
        super().__init__(f"no redex at position {format_position(pos)}")


class BrokenChain(TermError):
    def __init__(self, index, detail):
        self.index = index
        super().__init__(f"step {index}: {detail}")


class ParseError(TermError):
    def __init__(self, msg, line, col):
        self.line, self.col = line, col
        super().__init__(f"{msg} at line {line}, column {col}")


# -- positions -------------------------------------------------------------

def collapse(s) -> Position:
    return tuple(2 if k >= 3 else k for k in s)


def applicative_depth(s) -> int:
    return sum(1 for k in s if k >= 2)


def format_position(s) -> str:
    return ".".join(str(k) for k in s) if len(s) else "e"


def parse_position(text: str) -> Position:
    text = text.strip()
    if text in ("e", "ε", ""):
        return ()
    try:
        out = tuple(int(p) for p in text.split("."))
    except ValueError:
        raise TermError(f"bad position {text!r}") from None
    if any(k < 0 for k in out):
        raise TermError(f"bad position {text!r}")
    return out


def is_prefix(a, b) -> bool:
    return len(a) <= len(b) and tuple(b[: len(a)]) == tuple(a)


# -- term nodes ------------------------------------------------------------

class _Node:
    __slots__ = ()

    def __hash__(self):
        return self._h

    def __str__(self):
        return format_term(self)


@dataclass(frozen=True, eq=True)
class Var(_Node):
    name: str

    def __post_init__(self):
        object.__setattr__(self, "_h", hash(("v", self.name)))


@dataclass(frozen=True, eq=True)
class Lam(_Node):
    var: str
    body: object

    def __post_init__(self):
        object.__setattr__(self, "_h", hash(("l", self.var, self.body._h)))


@dataclass(frozen=True, eq=True)
class App(_Node):
    fun: object
    arg: object

    def __post_init__(self):
        object.__setattr__(self, "_h", hash(("a", self.fun._h, self.arg._h)))


@dataclass(frozen=True, eq=True)
class Rec(_Node):
    label: str
    body: object

    def __post_init__(self):
        object.__setattr__(self, "_h", hash(("r", self.label, self.body._h)))


@dataclass(frozen=True, eq=True)
class Loop(_Node):
    label: str

    def __post_init__(self):
        object.__setattr__(self, "_h", hash(("o", self.label)))


@dataclass(frozen=True, eq=True)
class Horizon(_Node):
    """Marker for a subtree cut off by a bounded unfolding."""

    def __post_init__(self):
        object.__setattr__(self, "_h", hash("horizon"))


HORIZON = Horizon()


def lam(*args):
    """lam("x", "y", body) builds nested abstractions."""
    *names, body = args
    for n in reversed(names):
        body = Lam(n, body)
    return body


def app(*ts):
    out = ts[0]
    for t in ts[1:]:
        out = App(out, t)
    return out


# -- free variables and recursion plumbing ---------------------------------

@lru_cache(maxsize=None)
def free_vars(t) -> frozenset:
    """Free variables of the graph; back-references contribute nothing."""
    if isinstance(t, Var):
        return frozenset([t.name])
    if isinstance(t, Lam):
        return free_vars(t.body) - {t.var}
    if isinstance(t, App):
        return free_vars(t.fun) | free_vars(t.arg)
    if isinstance(t, Rec):
        return free_vars(t.body)
    return frozenset()


@lru_cache(maxsize=None)
def free_loops(t) -> frozenset:
    if isinstance(t, Loop):
        return frozenset([t.label])
    if isinstance(t, Lam):
        return free_loops(t.body)
    if isinstance(t, App):
        return free_loops(t.fun) | free_loops(t.arg)
    if isinstance(t, Rec):
        return free_loops(t.body) - {t.label}
    return frozenset()


def _replace_loop(t, label, target):
    if label not in free_loops(t):
        return t
    if isinstance(t, Loop):
        return target
    if isinstance(t, Lam):
        return Lam(t.var, _replace_loop(t.body, label, target))
    if isinstance(t, App):
        return App(_replace_loop(t.fun, label, target), _replace_loop(t.arg, label, target))
    if isinstance(t, Rec):
        return Rec(t.label, _replace_loop(t.body, label, target))
    return t


@lru_cache(maxsize=None)
def _unroll_rec(r):
    return _replace_loop(r.body, r.label, r)


def unroll(t):
    """Peel rec binders until the root is a real constructor."""
    seen = 0
    while isinstance(t, Rec):
        t = _unroll_rec(t)
        seen += 1
        if seen > 10_000:
            raise TermError("unguarded recursion")
    if isinstance(t, Loop):
        raise TermError(f"dangling back-reference {t.label}")
    return t


def children(t):
    t = unroll(t)
    if isinstance(t, Lam):
        return ((0, t.body),)
    if isinstance(t, App):
        return ((1, t.fun), (2, t.arg))
    return ()


def child(t, k):
    t = unroll(t)
    if isinstance(t, Lam) and k == 0:
        return t.body
    if isinstance(t, App) and k == 1:
        return t.fun
    if isinstance(t, App) and k == 2:
        return t.arg
    return None


def fresh_name(base: str, avoid) -> str:
    stem = base.rstrip("0123456789") or base
    i = 1
    while f"{stem}{i}" in avoid:
        i += 1
    return f"{stem}{i}"


def _all_names(t, acc=None, seen=None):
    if acc is None:
        acc, seen = set(), set()
    stack = [t]
    while stack:
        u = stack.pop()
        if id(u) in seen:
            continue
        seen.add(id(u))
        if isinstance(u, Var):
            acc.add(u.name)
        elif isinstance(u, Lam):
            acc.add(u.var)
            stack.append(u.body)
        elif isinstance(u, App):
            stack.extend((u.fun, u.arg))
        elif isinstance(u, Rec):
            stack.append(u.body)
    return acc


def make_rec(label, body):
    """Build ``rec label. body`` after renaming binders that would capture.

    A back-reference under a binder for a variable free in the whole rec
    would capture that variable in the next copy, so such binders get
    fresh names first.
    """
    fv = free_vars(body)
    if label not in free_loops(body):
        return body
    avoid = _all_names(body) | fv

    def fix(t):
        if label not in free_loops(t):
            return t
        if isinstance(t, Lam):
            if t.var in fv:
                new = fresh_name(t.var, avoid)
                avoid.add(new)
                return Lam(new, fix(_subst(t.body, t.var, Var(new), frozenset([new]), {})))
            return Lam(t.var, fix(t.body))
        if isinstance(t, App):
            return App(fix(t.fun), fix(t.arg))
        if isinstance(t, Rec):
            return Rec(t.label, fix(t.body))
        return t

    body = fix(body)
    _check_guarded(label, body)
    return Rec(label, body)


def _check_guarded(label, body):
    # every path from the binder to a back-reference must cross a constructor
    t = body
    while isinstance(t, Rec):
        if t.label == label:
            return
        t = t.body
    if isinstance(t, Loop) and t.label == label:
        raise TermError(f"unguarded recursion on {label}")


# -- substitution ------------------------------------------------------------

def _x_free(t, x, hot):
    return x in free_vars(t) or bool(free_loops(t) & hot)


def _subst(t, x, u, fvu, memo, hot=frozenset()):
    # ``hot`` holds labels of enclosing recs in which x occurs free; a
    # back-reference to one of them stands for a copy containing x.
    if not _x_free(t, x, hot):
        return t
    key = (id(t), hot)
    if key in memo:
        return memo[key][1]
    if isinstance(t, Var):
        out = u
    elif isinstance(t, Lam):
        if t.var == x:
            out = t
        else:
            var, body = t.var, t.body
            if var in fvu:
                new = fresh_name(var, fvu | free_vars(body) | {x} | _all_names(body))
                body = _subst(body, var, Var(new), frozenset([new]), {})
                var = new
            out = Lam(var, _subst(body, x, u, fvu, memo, hot))
    elif isinstance(t, App):
        out = App(_subst(t.fun, x, u, fvu, memo, hot), _subst(t.arg, x, u, fvu, memo, hot))
    elif isinstance(t, Rec):
        out = Rec(t.label, _subst(t.body, x, u, fvu, memo, hot | {t.label}))
    else:
        out = t
    memo[key] = (t, out)
    return out


def substitute(t, x: str, u):
    """Capture-avoiding t[u/x]; clashing binders get a numeric suffix."""
    return _subst(t, x, u, free_vars(u), {})


# -- navigation ----------------------------------------------------------------

def subterm_at(t, b):
    cur = t
    for i, k in enumerate(b):
        nxt = child(cur, k)
        if nxt is None:
            raise PositionOutOfSupport(tuple(b), f"no child {k} at {format_position(tuple(b[:i]))}")
        cur = nxt
    return unroll(cur) if not isinstance(cur, Horizon) else cur


def in_support(t, b) -> bool:
    try:
        subterm_at(t, b)
        return True
    except PositionOutOfSupport:
        return False


def label_at(t, b) -> str:
    return node_label(subterm_at(t, b))


def node_label(t) -> str:
    t = unroll(t) if not isinstance(t, Horizon) else t
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Lam):
        return "λ" + t.var
    if isinstance(t, App):
        return "@"
    return "▣"


def _replace_at(t, b, new):
    if not b:
        return new
    t = unroll(t)
    k = b[0]
    if isinstance(t, Lam) and k == 0:
        return Lam(t.var, _replace_at(t.body, b[1:], new))
    if isinstance(t, App) and k == 1:
        return App(_replace_at(t.fun, b[1:], new), t.arg)
    if isinstance(t, App) and k == 2:
        return App(t.fun, _replace_at(t.arg, b[1:], new))
    raise PositionOutOfSupport(tuple(b))


def replace_at(t, b, new):
    b = tuple(b)
    subterm_at(t, b)
    return _replace_at(t, b, new)


def is_redex(t) -> bool:
    t = unroll(t)
    return isinstance(t, App) and isinstance(unroll(t.fun), Lam)


def reduce_at(t, b):
    b = tuple(b)
    r = subterm_at(t, b)
    if not is_redex(r):
        raise NotARedex(b)
    f = unroll(r.fun)
    return _replace_at(t, b, substitute(f.body, f.var, r.arg))


def _graph_nodes(t) -> Iterator:
    seen = set()
    stack = [t]
    while stack:
        u = stack.pop()
        if isinstance(u, Horizon):
            continue
        u = unroll(u)
        if id(u) in seen:
            continue
        seen.add(id(u))
        yield u
        stack.extend(c for _, c in children(u))


def is_normal_form(t) -> bool:
    return not any(is_redex(u) for u in _graph_nodes(t))


def head_redex(t):
    """Position of the head redex, or None for a head normal form."""
    pos = []
    t = unroll(t)
    while isinstance(t, Lam):
        pos.append(0)
        t = unroll(t.body)
    spine = []
    while isinstance(t, App):
        spine.append(t)
        t = unroll(t.fun)
    if isinstance(t, Lam) and spine:
        return tuple(pos) + (1,) * (len(spine) - 1)
    return None


def is_hnf(t) -> bool:
    return head_redex(t) is None


def hnf_shape(t):
    """For an HNF λx1..xp.(x t1)..tq return (binders, head variable, args)."""
    t = unroll(t)
    binders = []
    while isinstance(t, Lam):
        binders.append(t.var)
        t = unroll(t.body)
    args = []
    while isinstance(t, App):
        args.append(t.arg)
        t = unroll(t.fun)
    if not isinstance(t, Var):
        raise TermError("term is not in head normal form")
    return binders, t.name, list(reversed(args))


# -- alpha equivalence -------------------------------------------------------

def alpha_equal(t, u) -> bool:
    """Bisimulation of the unfoldings up to renaming of bound variables."""
    seen = set()
    stack = [(t, u, frozenset())]
    while stack:
        a, b, env = stack.pop()
        if isinstance(a, Horizon) or isinstance(b, Horizon):
            if type(a) is not type(b):
                return False
            continue
        a, b = unroll(a), unroll(b)
        fa, fb = free_vars(a), free_vars(b)
        env = frozenset(p for p in env if p[0] in fa or p[1] in fb)
        key = (id(a), id(b), env)
        if key in seen:
            continue
        seen.add(key)
        if type(a) is not type(b):
            return False
        if isinstance(a, Var):
            bound_a = {p[0] for p in env}
            bound_b = {p[1] for p in env}
            if (a.name, b.name) in env:
                continue
            if a.name in bound_a or b.name in bound_b or a.name != b.name:
                return False
        elif isinstance(a, Lam):
            inner = frozenset(p for p in env if p[0] != a.var and p[1] != b.var) | {(a.var, b.var)}
            stack.append((a.body, b.body, inner))
        else:
            stack.append((a.fun, b.fun, env))
            stack.append((a.arg, b.arg, env))
    return True


# -- Λ^001 ---------------------------------------------------------------------

def is_001(t) -> bool:
    """Every recursion cycle must cross an argument edge."""
    def walk(u, open_recs):
        # open_recs: label -> whether an argument edge was crossed since the binder
        if isinstance(u, Loop):
            return open_recs.get(u.label, True)
        if isinstance(u, Rec):
            inner = dict(open_recs)
            inner[u.label] = False
            return walk(u.body, inner)
        if isinstance(u, Lam):
            return walk(u.body, open_recs)
        if isinstance(u, App):
            crossed = {k: True for k in open_recs}
            return walk(u.fun, open_recs) and walk(u.arg, crossed)
        return True

    return walk(t, {})


# -- views -------------------------------------------------------------------

@dataclass(frozen=True)
class TermView:
    tree: object
    markers: frozenset
    depth: int

    def __str__(self):
        return format_term(self.tree)


def unfold(t, depth: int, max_nodes: int = 100_000) -> TermView:
    """Finite view keeping positions of applicative depth at most ``depth``."""
    if depth < 0:
        raise ValueError("depth must be non-negative")
    built = {}
    kids = {}
    order = []
    markers = set()
    queue = deque([((), t)])
    count = 0
    while queue:
        pos, u = queue.popleft()
        if isinstance(u, Horizon) or applicative_depth(pos) > depth or count >= max_nodes:
            markers.add(pos)
            built[pos] = HORIZON
            continue
        count += 1
        u = unroll(u)
        order.append(pos)
        built[pos] = u
        kids[pos] = [k for k, _ in children(u)]
        for k, c in children(u):
            queue.append((pos + (k,), c))
    for pos in reversed(order):
        u = built[pos]
        if isinstance(u, Lam):
            built[pos] = Lam(u.var, built[pos + (0,)])
        elif isinstance(u, App):
            built[pos] = App(built[pos + (1,)], built[pos + (2,)])
    return TermView(built[()], frozenset(markers), depth)


def view_tree(t):
    return t.tree if isinstance(t, TermView) else t


# -- strong convergence ------------------------------------------------------

@dataclass
class ConvergenceReport:
    verdict: str  # "consistent" or "stalled"
    depth: int | None
    last_index: dict

    def __str__(self):
        if self.verdict == "consistent":
            if self.depth is None:
                return "consistent (finite)"
            return f"consistent up to depth {self.depth}"
        return f"stalled at depth {self.depth}"


def check_strong_convergence(seq) -> ConvergenceReport:
    """seq is a list of (term, position); step i reduces term i at its position
    and must produce term i+1. The last entry may carry position None."""
    steps = [(t, tuple(b) if b is not None else None) for t, b in seq]
    for i in range(len(steps) - 1):
        t, b = steps[i]
        if b is None:
            raise BrokenChain(i, "missing reduction position")
        try:
            nxt = reduce_at(t, b)
        except TermError as e:
            raise BrokenChain(i, str(e)) from None
        if not alpha_equal(nxt, steps[i + 1][0]):
            raise BrokenChain(i, "next term is not the contractum")
    positions = [b for _, b in steps if b is not None]
    if len(positions) <= 1:
        return ConvergenceReport("consistent", None, {})
    depths = [applicative_depth(b) for b in positions]
    last_index = {}
    for d in range(max(depths) + 1):
        hits = [i for i, x in enumerate(depths) if x <= d]
        if hits:
            last_index[d] = hits[-1]
    if depths[-1] <= min(depths[:-1]):
        return ConvergenceReport("stalled", depths[-1], last_index)
    return ConvergenceReport("consistent", depths[-1] - 1, last_index)


# -- parsing and printing ----------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(?P<lam>\\|λ)|(?P<dot>\.)|(?P<lp>\()|(?P<rp>\))|(?P<mark>▣)"
                    r"|(?P<id>[A-Za-z_][A-Za-z0-9_']*))")


def _tokenize(text):
    out = []
    i = 0
    line, line_start = 1, 0
    while True:
        while i < len(text) and text[i].isspace():
            if text[i] == "\n":
                line, line_start = line + 1, i + 1
            i += 1
        if i >= len(text):
            break
        m = _TOKEN.match(text, i)
        if not m or m.end() == i:
            raise ParseError(f"unexpected character {text[i]!r}", line, i - line_start + 1)
        kind = m.lastgroup
        val = m.group(kind)
        start = m.start(kind)
        out.append((kind, val, line, start - line_start + 1))
        i = m.end()
    out.append(("eof", "", line, i - line_start + 1))
    return out


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, kind):
        tok = self.toks[self.i]
        if tok[0] != kind:
            what = tok[1] or "end of input"
            raise ParseError(f"expected {kind}, found {what!r}", tok[2], tok[3])
        self.i += 1
        return tok

    def starts_atom(self):
        kind, val = self.peek()[:2]
        return kind in ("lp", "id", "mark", "lam")

    def term(self, scope):
        kind, val = self.peek()[:2]
        if kind == "lam":
            return self.binder(scope)
        if kind == "id" and val == "rec":
            return self.rec(scope)
        fn = self.atom(scope)
        while self.starts_atom():
            kind, val = self.peek()[:2]
            if kind == "lam" or (kind == "id" and val == "rec"):
                return App(fn, self.term(scope))
            fn = App(fn, self.atom(scope))
        return fn

    def binder(self, scope):
        self.take("lam")
        names = []
        while self.peek()[0] == "id":
            names.append(self.take("id")[1])
        if not names:
            tok = self.peek()
            raise ParseError("expected a bound variable", tok[2], tok[3])
        self.take("dot")
        inner = scope
        for n in names:
            inner = inner + (("var", n),)
        return lam(*names, self.term(inner))

    def rec(self, scope):
        tok = self.take("id")
        name = self.take("id")[1]
        self.take("dot")
        body = self.term(scope + (("rec", name),))
        try:
            return make_rec(name, body)
        except TermError as e:
            raise ParseError(str(e), tok[2], tok[3]) from None

    def atom(self, scope):
        kind, val, line, col = self.peek()
        if kind == "lp":
            self.take("lp")
            t = self.term(scope)
            self.take("rp")
            return t
        if kind == "mark":
            self.take("mark")
            return HORIZON
        if kind == "id":
            if val == "rec":
                raise ParseError("unexpected 'rec'", line, col)
            self.take("id")
            for k, n in reversed(scope):
                if n == val:
                    return Loop(val) if k == "rec" else Var(val)
            return Var(val)
        raise ParseError(f"unexpected {val or 'end of input'!r}", line, col)


def parse_term(text: str):
    p = _Parser(text)
    t = p.term(())
    tok = p.peek()
    if tok[0] != "eof":
        raise ParseError(f"unexpected {tok[1]!r}", tok[2], tok[3])
    return t


def format_term(t) -> str:
    if isinstance(t, TermView):
        t = t.tree

    def go(u, ctx):
        # ctx: "top", "fun" (left of application) or "arg"
        if isinstance(u, Var):
            return u.name
        if isinstance(u, Loop):
            return u.label
        if isinstance(u, Horizon):
            return "▣"
        if isinstance(u, Lam):
            names = [u.var]
            body = u.body
            while isinstance(body, Lam):
                names.append(body.var)
                body = body.body
            s = "\\" + " ".join(names) + ". " + go(body, "top")
            return s if ctx == "top" else f"({s})"
        if isinstance(u, Rec):
            s = f"rec {u.label}. " + go(u.body, "top")
            return s if ctx == "top" else f"({s})"
        s = go(u.fun, "fun") + " " + go(u.arg, "arg")
        return f"({s})" if ctx == "arg" else s

    return go(t, "top")


def iter_positions(t, max_depth=None) -> Iterable:
    """Positions of a finite term (or of a regular one up to a depth)."""
    stack = [((), t)]
    while stack:
        pos, u = stack.pop()
        if isinstance(u, Horizon):
            continue
        if max_depth is not None and applicative_depth(pos) > max_depth:
            continue
        yield pos
        for k, c in children(u):
            stack.append((pos + (k,), c))


for _cls in (Var, Lam, App, Rec, Loop, Horizon):
    _cls.__hash__ = _Node.__hash__
