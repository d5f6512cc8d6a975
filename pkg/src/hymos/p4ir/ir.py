"""Intermediate representation for match+action switch programs.

A Program bundles packet header layouts, an acyclic parser state machine,
primitive-based actions, match tables (exact / lpm / ternary), and the
ingress/egress control flow. Programs are normally built from JSON (see
loader) and must pass validate() before the interpreter will execute them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

# Parser terminal states.
ACCEPT = "accept"
REJECT = "reject"

# Standard metadata keys and their bit widths. This is a closed set: actions
# and table keys may reference exactly these under the "meta." prefix.
META_WIDTHS = {
    "ingress_port": 16,
    "egress_spec": 16,
    "pcp": 3,
    "is_internal": 1,
    "orig_ingress_port": 16,
}

# egress_spec sentinel: packet marked for dropping. Unset is represented
# as None. Any non-negative value is a global port id.
EGRESS_DROP = -1

MATCH_KINDS = ("exact", "lpm", "ternary")

# Primitive ops and the operand slots each one uses.
PRIMITIVE_OPS = {
    "set_field": ("field", "value"),
    "add_to_field": ("field", "value"),
    "set_egress": ("value",),
    "set_meta": ("meta", "value"),
    "push_header": ("header",),
    "pop_header": ("header",),
    "drop": (),
    "no_op": (),
}

# A header field named this, 3 bits wide, latches the packet's priority
# class into metadata when its header is extracted.
PCP_FIELD = "pcp"


@dataclass
class HeaderType:
    """Fixed-layout header: an ordered list of (field name, width in bits)."""

    name: str
    fields: list[tuple[str, int]]

    @property
    def total_bits(self) -> int:
        return sum(w for _, w in self.fields)

    @property
    def nbytes(self) -> int:
        return self.total_bits // 8

    def field_width(self, fname: str) -> int | None:
        for n, w in self.fields:
            if n == fname:
                return w
        return None


@dataclass
class ParserState:
    """One parser state: extract a header, then branch on an extracted field.

    internal_ports_from names a previously extracted header whose first two
    fields carry the fabric-internal egress/ingress port numbers in their
    low bytes; entering the state latches them into metadata and flags
    the packet as internal. Only translated per-card programs use it.
    """

    name: str
    extract: str
    select_field: str | None = None
    cases: list[tuple[int, str]] = field(default_factory=list)
    default_next: str = ACCEPT
    internal_ports_from: str | None = None


@dataclass(frozen=True)
class Operand:
    """Primitive operand: a literal, an action parameter, a header field,
    or a metadata key."""

    kind: str  # "lit" | "param" | "field" | "meta"
    ref: object

    @staticmethod
    def lit(v: int) -> "Operand":
        return Operand("lit", v)

    @staticmethod
    def param(name: str) -> "Operand":
        return Operand("param", name)

    @staticmethod
    def hfield(ref: str) -> "Operand":
        return Operand("field", ref)

    @staticmethod
    def meta(key: str) -> "Operand":
        return Operand("meta", key)


@dataclass
class Primitive:
    op: str
    field: str | None = None  # "header.field" destination
    meta: str | None = None  # metadata destination key
    header: str | None = None  # push/pop target
    value: Operand | None = None


@dataclass
class Action:
    name: str
    params: list[tuple[str, int]] = field(default_factory=list)
    primitives: list[Primitive] = field(default_factory=list)

    def param_names(self) -> set[str]:
        return {n for n, _ in self.params}


@dataclass
class Table:
    """Match table declaration. keys are (field reference, match kind)."""

    name: str
    keys: list[tuple[str, str]]
    allowed_actions: list[str]
    default_action: str
    default_params: dict[str, int] = field(default_factory=dict)

    def kinds(self) -> list[str]:
        return [k for _, k in self.keys]


@dataclass
class Apply:
    table: str


@dataclass
class If:
    """Metadata conditional guarding a block of statements."""

    meta: str
    op: str  # "eq" | "ne"
    value: int
    then: list = field(default_factory=list)


Statement = Apply | If


@dataclass
class Program:
    headers: list[HeaderType]
    parser: list[ParserState]
    start: str
    actions: list[Action]
    tables: list[Table]
    ingress: list[Statement]
    egress: list[Statement]

    def header(self, name: str) -> HeaderType | None:
        for h in self.headers:
            if h.name == name:
                return h
        return None

    def state(self, name: str) -> ParserState | None:
        for s in self.parser:
            if s.name == name:
                return s
        return None

    def action(self, name: str) -> Action | None:
        for a in self.actions:
            if a.name == name:
                return a
        return None

    def table(self, name: str) -> Table | None:
        for t in self.tables:
            if t.name == name:
                return t
        return None


# --- table entries -----------------------------------------------------


@dataclass(frozen=True)
class MatchExact:
    value: int


@dataclass(frozen=True)
class MatchLpm:
    value: int
    prefix_len: int


@dataclass(frozen=True)
class MatchTernary:
    value: int
    mask: int


MatchSpec = MatchExact | MatchLpm | MatchTernary


@dataclass
class TableEntry:
    table: str
    match: list[MatchSpec]
    action: str
    params: dict[str, int] = field(default_factory=dict)
    priority: int | None = None


@dataclass(frozen=True)
class Disposition:
    """Final fate of a packet: forward to a global port, or drop."""

    port: int | None

    @property
    def is_forward(self) -> bool:
        return self.port is not None

    @staticmethod
    def forward(port: int) -> "Disposition":
        return Disposition(port)

    @staticmethod
    def drop() -> "Disposition":
        return Disposition(None)

    def __repr__(self) -> str:
        return f"Forward({self.port})" if self.is_forward else "Drop"


# --- validation ---------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: {self.location}: {self.message}"


def _split_ref(ref: str) -> tuple[str, str] | None:
    if not isinstance(ref, str) or ref.count(".") != 1:
        return None
    h, f = ref.split(".")
    if not h or not f:
        return None
    return h, f


def _resolve_ref(p: Program, ref: str) -> int | None:
    """Width in bits of a 'header.field' or 'meta.key' reference, or None."""
    parts = _split_ref(ref)
    if parts is None:
        return None
    h, f = parts
    if h == "meta":
        return META_WIDTHS.get(f)
    ht = p.header(h)
    if ht is None:
        return None
    return ht.field_width(f)


def validate(p: Program) -> list[Diagnostic]:
    """Check every structural invariant; an empty list means the program is
    executable. Diagnostics carry a dotted location and never raise."""
    diags: list[Diagnostic] = []

    def err(loc: str, msg: str) -> None:
        diags.append(Diagnostic("error", loc, msg))

    # headers
    seen_headers: set[str] = set()
    for h in p.headers:
        loc = f"headers.{h.name}"
        if h.name in seen_headers:
            err(loc, "duplicate header name")
        seen_headers.add(h.name)
        fnames: set[str] = set()
        for fname, width in h.fields:
            if fname in fnames:
                err(loc, f"duplicate field {fname}")
            fnames.add(fname)
            if not 1 <= width <= 64:
                err(f"{loc}.{fname}", f"field width {width} outside 1..64")
        if h.total_bits % 8 != 0:
            err(loc, f"total width {h.total_bits} bits is not a whole number of bytes")

    # parser
    state_names = {s.name for s in p.parser}
    if len(state_names) != len(p.parser):
        err("parser", "duplicate state names")
    if p.start not in state_names:
        err("parser.start", f"start state {p.start!r} not declared")
    for s in p.parser:
        loc = f"parser.{s.name}"
        if p.header(s.extract) is None:
            err(loc, f"extracts undeclared header {s.extract!r}")
        if s.select_field is not None:
            if _resolve_ref(p, s.select_field) is None or s.select_field.startswith("meta."):
                err(loc, f"select field {s.select_field!r} does not name a header field")
        for i, (_, nxt) in enumerate(s.cases):
            if nxt not in state_names and nxt != ACCEPT:
                err(f"{loc}.cases[{i}]", f"transition to unknown state {nxt!r}")
        if s.default_next not in state_names and s.default_next not in (ACCEPT, REJECT):
            err(loc, f"default transition to unknown state {s.default_next!r}")
        if s.internal_ports_from is not None:
            src = p.header(s.internal_ports_from)
            if src is None:
                err(loc, f"internal_ports_from references undeclared header")
            elif len(src.fields) < 2 or src.fields[0][1] != 48 or src.fields[1][1] != 48:
                err(loc, "internal_ports_from header must start with two 48-bit address fields")

    # parser graph: acyclic, and no header extracted twice on any path
    if not diags:
        diags.extend(_check_parser_paths(p))

    # actions
    action_names: set[str] = set()
    for a in p.actions:
        loc = f"actions.{a.name}"
        if a.name in action_names:
            err(loc, "duplicate action name")
        action_names.add(a.name)
        pnames: set[str] = set()
        for pname, width in a.params:
            if pname in pnames:
                err(loc, f"duplicate parameter {pname}")
            pnames.add(pname)
            if not 1 <= width <= 64:
                err(f"{loc}.{pname}", f"parameter width {width} outside 1..64")
        for i, prim in enumerate(a.primitives):
            ploc = f"{loc}.primitives[{i}]"
            if prim.op not in PRIMITIVE_OPS:
                err(ploc, f"unknown primitive {prim.op!r}")
                continue
            diags.extend(_check_primitive(p, a, prim, ploc))

    # tables
    table_names: set[str] = set()
    for t in p.tables:
        loc = f"tables.{t.name}"
        if t.name in table_names:
            err(loc, "duplicate table name")
        table_names.add(t.name)
        kinds = t.kinds()
        if kinds.count("lpm") > 1:
            err(loc, "at most one lpm key per table")
        if "lpm" in kinds and "ternary" in kinds:
            err(loc, "lpm and ternary keys cannot be mixed in one table")
        for i, (ref, kind) in enumerate(t.keys):
            kloc = f"{loc}.keys[{i}]"
            if kind not in MATCH_KINDS:
                err(kloc, f"unknown match kind {kind!r}")
            if _resolve_ref(p, ref) is None:
                err(kloc, f"key field {ref!r} does not resolve")
        for an in t.allowed_actions:
            if p.action(an) is None:
                err(loc, f"allowed action {an!r} not declared")
        da = p.action(t.default_action)
        if da is None:
            err(loc, f"default action {t.default_action!r} not declared")
        else:
            if t.default_action not in t.allowed_actions:
                err(loc, "default action must be listed in the table's actions")
            if set(t.default_params) != da.param_names():
                err(loc, "default action parameters do not match the action signature")

    # pipelines
    def walk(stmts: list[Statement], loc: str) -> None:
        for i, s in enumerate(stmts):
            sloc = f"{loc}[{i}]"
            if isinstance(s, Apply):
                if p.table(s.table) is None:
                    err(sloc, f"apply of undeclared table {s.table!r}")
            elif isinstance(s, If):
                if s.meta not in META_WIDTHS:
                    err(sloc, f"unknown metadata key {s.meta!r}")
                if s.op not in ("eq", "ne"):
                    err(sloc, f"unknown comparison {s.op!r}")
                walk(s.then, f"{sloc}.then")
            else:
                err(sloc, f"unknown statement {type(s).__name__}")

    walk(p.ingress, "ingress")
    walk(p.egress, "egress")
    return diags


def _check_primitive(p: Program, a: Action, prim: Primitive, loc: str) -> list[Diagnostic]:
    diags: list[Diagnostic] = []

    def err(msg: str) -> None:
        diags.append(Diagnostic("error", loc, msg))

    def operand_ok(op: Operand | None, dest_width: int | None, signed: bool = False) -> None:
        if op is None:
            err("missing operand")
            return
        if op.kind == "lit":
            if not isinstance(op.ref, int):
                err("literal operand must be an integer")
            elif dest_width is not None:
                bound = 1 << dest_width
                if signed:
                    if not -bound < op.ref < bound:
                        err(f"literal {op.ref} does not fit in {dest_width} bits")
                elif not 0 <= op.ref < bound:
                    err(f"literal {op.ref} does not fit in {dest_width} bits")
        elif op.kind == "param":
            if op.ref not in a.param_names():
                err(f"unknown parameter {op.ref!r}")
        elif op.kind == "field":
            parts = _split_ref(op.ref)
            if parts is None or parts[0] == "meta" or _resolve_ref(p, op.ref) is None:
                err(f"operand field {op.ref!r} does not resolve")
        elif op.kind == "meta":
            if op.ref not in META_WIDTHS:
                err(f"unknown metadata key {op.ref!r}")
        else:
            err(f"unknown operand kind {op.kind!r}")

    if prim.op in ("set_field", "add_to_field"):
        if prim.field is None or _split_ref(prim.field) is None or prim.field.startswith("meta."):
            err("destination must be a header field")
            return diags
        w = _resolve_ref(p, prim.field)
        if w is None:
            err(f"destination field {prim.field!r} does not resolve")
            return diags
        operand_ok(prim.value, w, signed=prim.op == "add_to_field")
    elif prim.op == "set_egress":
        operand_ok(prim.value, META_WIDTHS["egress_spec"])
    elif prim.op == "set_meta":
        if prim.meta not in META_WIDTHS:
            err(f"unknown metadata key {prim.meta!r}")
            return diags
        operand_ok(prim.value, META_WIDTHS[prim.meta])
    elif prim.op in ("push_header", "pop_header"):
        if prim.header is None or p.header(prim.header) is None:
            err(f"header {prim.header!r} not declared")
    return diags


def _check_parser_paths(p: Program) -> list[Diagnostic]:
    """DFS from the start state: reject cycles, then enumerate paths to make
    sure no header is extracted twice. Parsers are tiny, so path enumeration
    is affordable."""
    diags: list[Diagnostic] = []
    states = {s.name: s for s in p.parser}

    # cycle detection
    color: dict[str, int] = {}  # 1=in stack, 2=done

    def nexts(s: ParserState) -> list[str]:
        out = [nxt for _, nxt in s.cases if nxt in states]
        if s.default_next in states:
            out.append(s.default_next)
        return out

    def dfs(name: str) -> bool:
        color[name] = 1
        for nxt in nexts(states[name]):
            c = color.get(nxt)
            if c == 1:
                return False
            if c is None and not dfs(nxt):
                return False
        color[name] = 2
        return True

    if p.start in states and not dfs(p.start):
        diags.append(Diagnostic("error", "parser", "parser graph must be acyclic"))
        return diags

    # double extraction along any path
    def paths(name: str, extracted: frozenset[str]) -> str | None:
        s = states[name]
        if s.extract in extracted:
            return f"header {s.extract!r} extracted twice on a path through {name!r}"
        ext = extracted | {s.extract}
        for nxt in nexts(s):
            bad = paths(nxt, ext)
            if bad:
                return bad
        return None

    if p.start in states:
        bad = paths(p.start, frozenset())
        if bad:
            diags.append(Diagnostic("error", "parser", bad))
    return diags
