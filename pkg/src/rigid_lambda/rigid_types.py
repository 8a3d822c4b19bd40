"""Rigid types: type variables, arrows whose sources are track-indexed
sequence types, and regular (mu-bound) infinite types.

A sequence type maps argument tracks (>= 2) to types. Besides finitely many
explicit entries it may carry a tail ``(m, T)`` standing for ``k -> T`` for
every ``k >= m``; that is how the omega-multisets of the untracked system
are represented.
"""
from __future__ import annotations

import re
from itertools import count


class TypeError_(Exception):
    pass


class TrackConflict(TypeError_):
    def __init__(self, track, what=""):
        self.track = track
        super().__init__(f"track conflict on {track}" + (f" for {what}" if what else ""))


class NoCommonUpperBound(TypeError_):
    pass


class TypeSyntaxError(TypeError_):
    def __init__(self, msg, col):
        self.col = col
        super().__init__(f"{msg} at column {col}")


_labels = count()


def _fresh_label():
    return f"m{next(_labels)}"


class Type:
    __slots__ = ()

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Type):
            return NotImplemented
        if self.plain and other.plain:
            return self.key == other.key
        if self.plain != other.plain:
            return False
        return types_equal(self, other)

    def __ne__(self, other):
        r = self.__eq__(other)
        return r if r is NotImplemented else not r

    def __hash__(self):
        if self.plain:
            return hash(self.key)
        return _shape_hash(self, 5)

    def __str__(self):
        return format_type(self)

    def __repr__(self):
        return f"Type({format_type(self)!r})"


class TVar(Type):
    __slots__ = ("name", "plain", "key")

    def __init__(self, name):
        self.name = name
        self.plain = True
        self.key = ("v", name)


class Arrow(Type):
    __slots__ = ("tail", "head", "plain", "_key")

    def __init__(self, tail, head):
        if not isinstance(tail, Seq):
            tail = Seq(tail)
        self.tail = tail
        self.head = head
        self.plain = tail.plain and head.plain
        self._key = None

    @property
    def key(self):
        if self._key is None:
            self._key = ("a", self.tail.key, self.head.key)
        return self._key


class TRec(Type):
    __slots__ = ("label", "body", "_unrolled")
    plain = False

    def __init__(self, label, body):
        self.label = label
        self.body = body
        self._unrolled = None


class TLoop(Type):
    __slots__ = ("label",)
    plain = False

    def __init__(self, label):
        self.label = label

    @property
    def key(self):
        return ("o", self.label)


def mu(label, body):
    """Close ``body`` over ``label``; vacuous binders are dropped."""
    if label not in _free_tloops(body):
        return body
    _check_not_head_cycle(label, body)
    return TRec(label, body)


def _free_tloops(t, bound=frozenset()):
    if isinstance(t, TLoop):
        return {t.label} - bound
    if isinstance(t, TRec):
        return _free_tloops(t.body, bound | {t.label})
    if isinstance(t, Arrow):
        out = _free_tloops(t.head, bound)
        for _, u in t.tail.all_types():
            out |= _free_tloops(u, bound)
        return out
    return set()


def _check_not_head_cycle(label, body):
    # a cycle made only of head edges would be an infinite branch 1^omega
    t = body
    while True:
        if isinstance(t, TLoop):
            if t.label == label:
                raise TypeError_(f"type cycle through heads only on {label}")
            return
        if isinstance(t, TRec):
            t = t.body
        elif isinstance(t, Arrow):
            t = t.head
        else:
            return


def _treplace(t, label, target):
    if isinstance(t, TLoop):
        return target if t.label == label else t
    if isinstance(t, TRec):
        if t.label == label:
            return t
        return TRec(t.label, _treplace(t.body, label, target))
    if isinstance(t, Arrow):
        if t.plain:
            return t
        return Arrow(t.tail.map(lambda u: _treplace(u, label, target)), _treplace(t.head, label, target))
    return t


def unroll(t):
    while isinstance(t, TRec):
        if t._unrolled is None:
            t._unrolled = _treplace(t.body, t.label, t)
        t = t._unrolled
    if isinstance(t, TLoop):
        raise TypeError_(f"dangling type back-reference {t.label}")
    return t


class Seq:
    """Sequence type. ``entries`` is a sorted tuple of (track, type)."""

    __slots__ = ("entries", "tail", "plain", "_key", "_dict")

    def __init__(self, entries=(), tail=None):
        if isinstance(entries, dict):
            entries = entries.items()
        items = sorted((int(k), t) for k, t in entries)
        for k, _ in items:
            if k < 2:
                raise TypeError_(f"argument tracks must be >= 2, got {k}")
        for (k1, _), (k2, _) in zip(items, items[1:]):
            if k1 == k2:
                raise TrackConflict(k1)
        if tail is not None:
            m, tt = tail
            if m < 2:
                raise TypeError_("tail must start at a track >= 2")
            if items and items[-1][0] >= m:
                raise TrackConflict(items[-1][0], "explicit entry inside the tail")
            while items and items[-1][0] == m - 1 and items[-1][1] == tt:
                items.pop()
                m -= 1
            tail = (m, tt)
        self.entries = tuple(items)
        self.tail = tail
        self.plain = all(t.plain for _, t in self.entries) and (tail is None or tail[1].plain)
        self._key = None
        self._dict = None

    @classmethod
    def omega(cls, t, start=2):
        return cls((), (start, t))

    @property
    def key(self):
        if self._key is None:
            self._key = (tuple((k, t.key) for k, t in self.entries),
                         None if self.tail is None else (self.tail[0], self.tail[1].key))
        return self._key

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Seq):
            return NotImplemented
        if self.plain and other.plain:
            return self.key == other.key
        return seqs_equal(self, other)

    def __hash__(self):
        if self.plain:
            return hash(self.key)
        return _seq_shape_hash(self, 5)

    def __str__(self):
        return format_seq(self)

    def __repr__(self):
        return f"Seq({format_seq(self)!r})"

    def __bool__(self):
        return bool(self.entries) or self.tail is not None

    @property
    def is_finite(self):
        return self.tail is None

    def as_dict(self):
        if self._dict is None:
            self._dict = dict(self.entries)
        return self._dict

    def get(self, k):
        t = self.as_dict().get(k)
        if t is None and self.tail is not None and k >= self.tail[0]:
            return self.tail[1]
        return t

    def __contains__(self, k):
        return self.get(k) is not None

    def roots(self):
        """Finite root set; raises on an infinite sequence type."""
        if self.tail is not None:
            raise TypeError_("infinite root set")
        return [k for k, _ in self.entries]

    def explicit_keys(self):
        return [k for k, _ in self.entries]

    def keys_upto(self, bound):
        ks = self.explicit_keys()
        if self.tail is not None:
            ks += list(range(self.tail[0], max(bound, self.tail[0] - 1) + 1))
        return ks

    def all_types(self):
        out = list(self.entries)
        if self.tail is not None:
            out.append((self.tail[0], self.tail[1]))
        return out

    def map(self, f):
        return Seq([(k, f(t)) for k, t in self.entries],
                   None if self.tail is None else (self.tail[0], f(self.tail[1])))

    def size(self):
        return float("inf") if self.tail is not None else len(self.entries)

    def restrict(self, keep):
        """Keep explicit tracks satisfying ``keep``; the tail must be absent."""
        return Seq([(k, t) for k, t in self.entries if keep(k)])

    def minus(self, other):
        """Remove the tracks of ``other``; they must be present here."""
        if other.tail is not None and self.tail is None:
            raise TrackConflict(other.tail[0], "removing an infinite tail")
        items = [(k, t) for k, t in self.entries if k not in other]
        tail = None
        if self.tail is not None:
            m, tt = self.tail
            if other.tail is None:
                top = max([k + 1 for k in other.explicit_keys()] + [m])
                tail = (top, tt)
            else:
                top = max(m, other.tail[0])
            items += [(k, tt) for k in range(m, top) if k not in other]
        return Seq(items, tail)


def _seq_top(*seqs):
    return max([k + 1 for s in seqs for k in s.explicit_keys()] +
               [s.tail[0] for s in seqs if s.tail is not None] + [2])


EMPTY = Seq()


def seq_join(family):
    items = []
    tails = []
    for f in family:
        items.extend(f.entries)
        if f.tail is not None:
            tails.append(f.tail)
    if len(tails) > 1:
        raise TrackConflict(max(t[0] for t in tails), "two infinite tails")
    seen = set()
    for k, _ in items:
        if k in seen:
            raise TrackConflict(k)
        seen.add(k)
    if tails:
        m, tt = tails[0]
        above = [k for k in seen if k >= m]
        if above:
            raise TrackConflict(min(above))
        return Seq(items, tails[0])
    return Seq(items)


# -- equality ----------------------------------------------------------------

def _shape_hash(t, d):
    if d == 0:
        return 0
    t = unroll(t)
    if isinstance(t, TVar):
        return hash(("v", t.name))
    return hash(("a", _seq_shape_hash(t.tail, d - 1), _shape_hash(t.head, d - 1)))


def _seq_shape_hash(s, d):
    return hash((tuple((k, _shape_hash(t, d)) for k, t in s.entries),
                 None if s.tail is None else (s.tail[0], _shape_hash(s.tail[1], d))))


def types_equal(t1, t2) -> bool:
    """Bisimilarity of the (possibly cyclic) type graphs."""
    seen = set()
    stack = [(t1, t2)]
    while stack:
        a, b = stack.pop()
        if a is b:
            continue
        if isinstance(a, Type) and isinstance(b, Type) and a.plain and b.plain:
            if a.key != b.key:
                return False
            continue
        if isinstance(a, Seq):
            if a.explicit_keys() != b.explicit_keys():
                return False
            if (a.tail is None) != (b.tail is None):
                return False
            if a.tail is not None:
                if a.tail[0] != b.tail[0]:
                    return False
                stack.append((a.tail[1], b.tail[1]))
            stack.extend(zip((t for _, t in a.entries), (t for _, t in b.entries)))
            continue
        a, b = unroll(a), unroll(b)
        key = (id(a), id(b))
        if key in seen:
            continue
        seen.add(key)
        if type(a) is not type(b):
            return False
        if isinstance(a, TVar):
            if a.name != b.name:
                return False
        else:
            stack.append((a.tail, b.tail))
            stack.append((a.head, b.head))
    return True


def seqs_equal(s1, s2) -> bool:
    return types_equal(s1, s2)


# -- positions -----------------------------------------------------------------

def label_of(t):
    t = unroll(t)
    return t.name if isinstance(t, TVar) else "→"


def type_at(t, c):
    """Subtree of a type at inner position ``c`` (None if outside)."""
    for k in c:
        t = unroll(t)
        if not isinstance(t, Arrow):
            return None
        if k == 1:
            t = t.head
        else:
            t = t.tail.get(k)
            if t is None:
                return None
    return unroll(t)


def seq_at(s, c):
    """Subtree of a sequence type at ``k·c``."""
    if not c:
        return None
    t = s.get(c[0])
    return None if t is None else type_at(t, c[1:])


def type_support(t, max_len=None, max_track=None):
    """Yield (position, label) pairs; bounds are needed for infinite types."""
    stack = [((), t)]
    while stack:
        pos, u = stack.pop()
        u = unroll(u)
        yield pos, label_of(u)
        if max_len is not None and len(pos) >= max_len:
            continue
        if isinstance(u, Arrow):
            stack.append((pos + (1,), u.head))
            for k, v in _seq_children(u.tail, max_track):
                stack.append((pos + (k,), v))


def seq_support(s, max_len=None, max_track=None):
    for k, v in _seq_children(s, max_track):
        for c, lab in type_support(v, None if max_len is None else max_len - 1, max_track):
            yield (k,) + c, lab


def _seq_children(s, max_track):
    out = list(s.entries)
    if s.tail is not None:
        if max_track is None:
            raise TypeError_("unbounded enumeration of an infinite sequence type")
        out += [(k, s.tail[1]) for k in range(s.tail[0], max(max_track, s.tail[0] - 1) + 1)]
    return out


def is_plain_finite(t) -> bool:
    """No mu binders and no infinite tails anywhere."""
    if isinstance(t, Seq):
        return t.tail is None and all(is_plain_finite(u) for _, u in t.entries)
    if not t.plain:
        return False
    if isinstance(t, Arrow):
        return is_plain_finite(t.tail) and is_plain_finite(t.head)
    return True


# -- EFO ---------------------------------------------------------------------

def efo_empty(u, polarity: str) -> bool:
    """Exact emptiness of EFO^polarity(u) via a least fixed point."""
    pol = _pol(polarity)
    if isinstance(u, Seq):
        return all(efo_empty(t, polarity) for _, t in u.all_types())
    succ = {}
    base = set()
    stack = [(unroll(u), pol)]
    nodes = {}
    while stack:
        t, p = stack.pop()
        key = (id(t), p)
        if key in succ:
            continue
        nodes[key] = t
        if isinstance(t, TVar):
            succ[key] = []
            continue
        nxt = [(unroll(t.head), p)]
        if not t.tail:
            base.add(key)  # an empty forest counts at either polarity
        else:
            nxt += [(unroll(v), -p) for _, v in t.tail.all_types()]
        succ[key] = [(id(a), q) for a, q in nxt]
        stack.extend(nxt)
    nonempty = set(base)
    changed = True
    while changed:
        changed = False
        for key, out in succ.items():
            if key not in nonempty and any(o in nonempty for o in out):
                nonempty.add(key)
                changed = True
    return (id(unroll(u)), pol) not in nonempty


def _pol(p):
    if p in ("+", 1, "pos"):
        return 1
    if p in ("-", "−", -1, "neg"):
        return -1
    raise ValueError(f"polarity must be + or -, got {p!r}")


def efo(u, polarity: str, horizon: int = 6):
    """EFO^polarity(u) restricted to positions of length <= horizon.

    Tracks of infinite tails are enumerated up to max(horizon, tail start).
    Use :func:`efo_empty` for the exact emptiness test.
    """
    _pol(polarity)
    out = set()

    def go(t, p, pos):
        if len(pos) > horizon:
            return
        t = unroll(t)
        if isinstance(t, TVar):
            return
        if not t.tail:
            out.add(pos)
        else:
            for k, v in _seq_children(t.tail, horizon):
                go(v, -p, pos + (k,))
        go(t.head, p, pos + (1,))

    if isinstance(u, Seq):
        for k, v in _seq_children(u, horizon):
            go(v, 1, (k,))
    else:
        go(u, 1, ())
    return frozenset(out)


def is_unforgetful(context, t) -> bool:
    items = context.items() if hasattr(context, "items") else context
    return all(efo_empty(s, "-") for _, s in items) and efo_empty(t, "+")


# -- approximation order, meet, join ------------------------------------------

def type_approx_leq(u1, u2) -> bool:
    assumed = set()
    stack = [(u1, u2)]
    while stack:
        a, b = stack.pop()
        if isinstance(a, Seq):
            if a.tail is not None:
                if b.tail is None or b.tail[0] > a.tail[0]:
                    if b.tail is None:
                        return False
                    # explicit entries of b must cover a's tail up to b's tail
                    for k in range(a.tail[0], b.tail[0]):
                        if k not in b.as_dict():
                            return False
                        stack.append((a.tail[1], b.as_dict()[k]))
                stack.append((a.tail[1], b.tail[1]))
            for k, t in a.entries:
                v = b.get(k)
                if v is None:
                    return False
                stack.append((t, v))
            continue
        if a.plain and b.plain and a.key == b.key:
            continue
        a, b = unroll(a), unroll(b)
        key = (id(a), id(b))
        if key in assumed:
            continue
        assumed.add(key)
        if type(a) is not type(b):
            return False
        if isinstance(a, TVar):
            if a.name != b.name:
                return False
        else:
            stack.append((a.tail, b.tail))
            stack.append((a.head, b.head))
    return True


seq_approx_leq = type_approx_leq


class _Combiner:
    def __init__(self, mode):
        self.mode = mode
        self.active = {}
        self.memo = {}

    def types(self, a, b):
        if a is b or (a.plain and b.plain and a.key == b.key):
            return a
        ua, ub = unroll(a), unroll(b)
        key = (id(ua), id(ub))
        if key in self.active:
            slot = self.active[key]
            if slot[0] is None:
                slot[0] = _fresh_label()
            return TLoop(slot[0])
        if a.plain and b.plain and key in self.memo:
            return self.memo[key][2]
        if type(ua) is not type(ub):
            raise NoCommonUpperBound(f"labels differ: {label_of(ua)} vs {label_of(ub)}")
        if isinstance(ua, TVar):
            if ua.name != ub.name:
                raise NoCommonUpperBound(f"labels differ: {ua.name} vs {ub.name}")
            return ua
        slot = [None]
        self.active[key] = slot
        out = Arrow(self.seqs(ua.tail, ub.tail), self.types(ua.head, ub.head))
        del self.active[key]
        if slot[0] is not None:
            out = mu(slot[0], out)
        if a.plain and b.plain:
            self.memo[key] = (ua, ub, out)
        return out

    def seqs(self, f, g):
        meet = self.mode == "meet"
        fd, gd = f.as_dict(), g.as_dict()
        top = max([k + 1 for k in fd] + [k + 1 for k in gd] +
                  [s.tail[0] for s in (f, g) if s.tail is not None] + [2])
        keys = set(fd) | set(gd)
        starts = [s.tail[0] for s in (f, g) if s.tail is not None]
        if starts:
            keys.update(range(min(starts), top))
        items = []
        for k in sorted(keys):
            x, y = f.get(k), g.get(k)
            if x is not None and y is not None:
                items.append((k, self.types(x, y)))
            elif not meet and (x is not None or y is not None):
                items.append((k, x if x is not None else y))
        tail = None
        if f.tail is not None and g.tail is not None:
            tail = (top, self.types(f.tail[1], g.tail[1]))
        elif not meet and (f.tail is not None or g.tail is not None):
            tail = (top, (f.tail or g.tail)[1])
        return Seq(items, tail)


def type_meet(family):
    family = list(family)
    if not family:
        raise ValueError("meet of an empty family")
    _check_pairwise(family)
    c = _Combiner("meet")
    out = family[0]
    for t in family[1:]:
        out = c.seqs(out, t) if isinstance(out, Seq) else c.types(out, t)
    return out


def type_join(family):
    family = list(family)
    if not family:
        raise ValueError("join of an empty family")
    c = _Combiner("join")
    out = family[0]
    for t in family[1:]:
        out = c.seqs(out, t) if isinstance(out, Seq) else c.types(out, t)
    return out


def _check_pairwise(family):
    for i in range(len(family)):
        for j in range(i + 1, len(family)):
            a, b = family[i], family[j]
            c = _Combiner("join")
            if isinstance(a, Seq):
                c.seqs(a, b)
            else:
                c.types(a, b)


seq_meet = type_meet
seq_join_compatible = type_join


# -- contexts ------------------------------------------------------------------

class Context:
    """Finite map from variables to non-empty sequence types."""

    __slots__ = ("_m", "_h")

    def __init__(self, mapping=None):
        m = {}
        for x, s in (mapping or {}).items() if isinstance(mapping, dict) else (mapping or ()):
            if s:
                m[x] = s
        self._m = dict(sorted(m.items()))
        self._h = None

    def get(self, x):
        return self._m.get(x, EMPTY)

    def __getitem__(self, x):
        return self.get(x)

    def __contains__(self, x):
        return x in self._m

    def items(self):
        return self._m.items()

    def vars(self):
        return list(self._m)

    def __iter__(self):
        return iter(self._m)

    def __len__(self):
        return len(self._m)

    def __eq__(self, other):
        if not isinstance(other, Context):
            return NotImplemented
        return self._m == other._m

    def __hash__(self):
        if self._h is None:
            self._h = hash(tuple(self._m.items()))
        return self._h

    def without(self, x):
        return Context({y: s for y, s in self._m.items() if y != x})

    def with_(self, x, s):
        m = dict(self._m)
        m[x] = s
        return Context(m)

    def join(self, *others):
        m = dict(self._m)
        for o in others:
            for x, s in o.items():
                if x in m:
                    try:
                        m[x] = seq_join([m[x], s])
                    except TrackConflict as e:
                        raise TrackConflict(e.track, x) from None
                else:
                    m[x] = s
        return Context(m)

    def minus(self, other):
        m = {}
        for x, s in self._m.items():
            o = other.get(x)
            m[x] = s.minus(o) if o else s
        return Context(m)

    def rename(self, mapping):
        out = {}
        for x, s in self._m.items():
            out[mapping.get(x, x)] = s
        return Context(out)

    def __str__(self):
        return format_context(self)

    def __repr__(self):
        return f"Context({format_context(self)!r})"


def context_disjoint(contexts) -> bool:
    try:
        Context().join(*contexts)
        return True
    except TrackConflict:
        return False


# -- syntax ------------------------------------------------------------------

_TTOK = re.compile(r"\s*(?:(?P<arrow>->|→)|(?P<lp>\()|(?P<rp>\))|(?P<colon>:)|(?P<comma>,)|(?P<dot>\.)"
                   r"|(?P<num>\d+)|(?P<id>[^\W\d][\w']*))")


def parse_type(text: str):
    toks = []
    i = 0
    while i < len(text):
        if text[i].isspace():
            i += 1
            continue
        m = _TTOK.match(text, i)
        if not m:
            raise TypeSyntaxError(f"unexpected character {text[i]!r}", i + 1)
        kind = m.lastgroup
        toks.append((kind, m.group(kind), m.start(kind) + 1))
        i = m.end()
    toks.append(("eof", "", len(text) + 1))
    state = {"i": 0}

    def peek():
        return toks[state["i"]]

    def take(kind):
        tok = toks[state["i"]]
        if tok[0] != kind:
            raise TypeSyntaxError(f"expected {kind}, found {tok[1] or 'end of input'!r}", tok[2])
        state["i"] += 1
        return tok

    def typ(scope):
        kind, val, col = peek()
        if kind == "id" and val == "rec":
            take("id")
            name = take("id")[1]
            take("dot")
            return mu(name, typ(scope | {name}))
        if kind == "id":
            take("id")
            return TLoop(val) if val in scope else TVar(val)
        take("lp")
        s = seq(scope)
        take("rp")
        take("arrow")
        return Arrow(s, typ(scope))

    def seq(scope):
        items, tail = [], None
        if peek()[0] == "rp":
            return Seq()
        while True:
            kind, val, col = peek()
            if kind == "num":
                take("num")
                take("colon")
                items.append((int(val), typ(scope)))
            elif kind == "id" and re.fullmatch(r"w\d*", val):
                take("id")
                take("colon")
                if tail is not None:
                    raise TypeSyntaxError("two infinite tails", col)
                tail = (int(val[1:]) if len(val) > 1 else 2, typ(scope))
            else:
                raise TypeSyntaxError(f"expected a track, found {val or 'end of input'!r}", col)
            if peek()[0] != "comma":
                break
            take("comma")
        if tail is not None:
            items = [(k, t) for k, t in items]
            m = tail[0]
            if any(k >= m for k, _ in items):
                raise TypeSyntaxError("explicit track inside the infinite tail", col)
        return Seq(items, tail)

    t = typ(frozenset())
    tok = peek()
    if tok[0] != "eof":
        raise TypeSyntaxError(f"unexpected {tok[1]!r}", tok[2])
    return t


def format_type(t) -> str:
    if isinstance(t, Seq):
        return format_seq(t)
    if isinstance(t, TVar):
        return t.name
    if isinstance(t, TLoop):
        return t.label
    if isinstance(t, TRec):
        return f"rec {t.label}.{format_type(t.body)}"
    return f"({format_seq(t.tail)})->{format_type(t.head)}"


def format_seq(s) -> str:
    parts = [f"{k}:{format_type(t)}" for k, t in s.entries]
    if s.tail is not None:
        m, t = s.tail
        parts.append(("w" if m == 2 else f"w{m}") + ":" + format_type(t))
    return ", ".join(parts)


def format_context(c) -> str:
    return "; ".join(f"{x}:({format_seq(s)})" for x, s in c.items())


def parse_seq(text: str):
    t = parse_type(f"({text})->_")
    return t.tail
