"""Reference interpreter for the match+action IR.

CompiledProgram turns a validated Program plus installed entries into
closure-based parse/lookup/action structures so the per-packet path is a
handful of dict operations. Everything is a pure function of the packet
bytes and the ingress port: tables never read the payload, so two packets
with identical parsed prefixes always take identical paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ir import (
    ACCEPT,
    Action,
    Apply,
    Diagnostic,
    Disposition,
    EGRESS_DROP,
    If,
    MatchExact,
    MatchLpm,
    MatchTernary,
    META_WIDTHS,
    Operand,
    PCP_FIELD,
    Program,
    REJECT,
    Table,
    TableEntry,
    validate,
)


class ParseError(Exception):
    """Parsing stopped: REJECT reached or bytes ran out mid-extract."""

    def __init__(self, state: str, reason: str):
        self.state = state
        self.reason = reason
        super().__init__(f"parse failed in state {state!r}: {reason}")


class InstallError(ValueError):
    """A table entry is inconsistent with its table's declaration."""


class PipelineError(Exception):
    """Runtime pipeline fault (e.g. pushing a header that already exists)."""


class ValidationFailed(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


class Metadata:
    """Per-packet standard metadata. egress_spec: None = unset, -1 = drop."""

    __slots__ = ("ingress_port", "egress_spec", "pcp", "is_internal", "orig_ingress_port")

    def __init__(self, ingress_port: int):
        self.ingress_port = ingress_port
        self.egress_spec: int | None = None
        self.pcp = 0
        self.is_internal = False
        self.orig_ingress_port = 0

    def get(self, key: str) -> int:
        v = getattr(self, key)
        if key == "egress_spec":
            return -2 if v is None else v
        return int(v)

    def __repr__(self) -> str:
        return (
            f"Metadata(in={self.ingress_port}, egress={self.egress_spec}, pcp={self.pcp}, "
            f"internal={self.is_internal}, orig_in={self.orig_ingress_port})"
        )


@dataclass(frozen=True)
class ActionCall:
    """A selected action with its bound parameter values."""

    action: str
    params: dict

    def __repr__(self) -> str:
        return f"{self.action}({self.params})"


@dataclass
class ExecResult:
    disposition: Disposition
    out_bytes: bytes
    meta: Metadata
    headers: dict
    header_order: list
    consumed: int
    trace: list = field(default_factory=list)
    parse_error: ParseError | None = None
    pipeline_error: PipelineError | None = None


class _CHeader:
    __slots__ = ("name", "nbytes", "plan", "widths", "pcp_field")

    def __init__(self, name: str, fields: list[tuple[str, int]]):
        self.name = name
        total = sum(w for _, w in fields)
        self.nbytes = total // 8
        plan = []
        off = 0
        widths = {}
        for fname, w in fields:
            shift = total - off - w
            plan.append((fname, shift, (1 << w) - 1))
            widths[fname] = w
            off += w
        self.plan = plan
        self.widths = widths
        self.pcp_field = PCP_FIELD if widths.get(PCP_FIELD) == 3 else None

    def unpack(self, chunk: bytes) -> dict:
        val = int.from_bytes(chunk, "big")
        return {fname: (val >> shift) & mask for fname, shift, mask in self.plan}

    def pack(self, d: dict) -> bytes:
        val = 0
        for fname, shift, mask in self.plan:
            val |= (d[fname] & mask) << shift
        return val.to_bytes(self.nbytes, "big")


class _CState:
    __slots__ = ("name", "header", "select", "cases", "default", "internal_from")

    def __init__(self, name, header, select, cases, default, internal_from):
        self.name = name
        self.header = header
        self.select = select  # (header name, field name) or None
        self.cases = cases  # {value: next state name or ACCEPT/REJECT}
        self.default = default
        self.internal_from = internal_from  # (header, dst field, src field) or None


_EXACT, _LPM, _TERNARY, _KEYLESS = range(4)


class _CTable:
    __slots__ = (
        "name",
        "kind",
        "getters",
        "exact_map",
        "lpm_pos",
        "lpm_width",
        "lpm_plans",
        "ternary_rows",
        "default",
    )


def _mk_getter(ref: str):
    h, f = ref.split(".")
    if h == "meta":
        if f == "egress_spec":
            def g(headers, meta):
                v = meta.egress_spec
                return v if v is not None and v >= 0 else None
        else:
            def g(headers, meta, _f=f):
                return int(getattr(meta, _f))
        return g

    def g(headers, meta, _h=h, _f=f):
        hd = headers.get(_h)
        return None if hd is None else hd[_f]

    return g


class CompiledProgram:
    """A validated program with entries installed, ready to execute packets."""

    def __init__(self, program: Program, entries: list[TableEntry] | None = None):
        diags = [d for d in validate(program) if d.severity == "error"]
        if diags:
            raise ValidationFailed(diags)
        self.program = program
        self._headers = {h.name: _CHeader(h.name, h.fields) for h in program.headers}
        self._states = {}
        for s in program.parser:
            select = None
            if s.select_field is not None:
                select = tuple(s.select_field.split("."))
            internal = None
            if s.internal_ports_from is not None:
                src = program.header(s.internal_ports_from)
                internal = (src.name, src.fields[0][0], src.fields[1][0])
            self._states[s.name] = _CState(
                s.name, self._headers[s.extract], select, dict(s.cases), s.default_next, internal
            )
        self._start = self._states[program.start]
        self._actions = {a.name: self._compile_action(a) for a in program.actions}
        self._action_defs = {a.name: a for a in program.actions}
        self._tables = {t.name: self._new_ctable(t) for t in program.tables}
        self._ingress = self._compile_statements(program.ingress)
        self._egress = self._compile_statements(program.egress)
        self.install(entries or [])

    # -- compilation -----------------------------------------------------

    def _compile_action(self, a: Action):
        runners = []
        for prim in a.primitives:
            runners.append(self._compile_primitive(prim))
        return runners

    def _operand_getter(self, op: Operand):
        if op.kind == "lit":
            v = op.ref
            return lambda headers, meta, params: v
        if op.kind == "param":
            name = op.ref
            return lambda headers, meta, params: params[name]
        if op.kind == "field":
            h, f = op.ref.split(".")

            def g(headers, meta, params, _h=h, _f=f):
                hd = headers.get(_h)
                return 0 if hd is None else hd[_f]

            return g
        key = op.ref

        def g(headers, meta, params, _k=key):
            return meta.get(_k)

        return g

    def _compile_primitive(self, prim):
        op = prim.op
        if op == "no_op":
            return lambda headers, order, meta, params: None
        if op == "drop":
            def run(headers, order, meta, params):
                meta.egress_spec = EGRESS_DROP
            return run
        if op == "set_egress":
            src = self._operand_getter(prim.value)
            mask = (1 << META_WIDTHS["egress_spec"]) - 1

            def run(headers, order, meta, params):
                meta.egress_spec = src(headers, meta, params) & mask

            return run
        if op == "set_meta":
            key = prim.meta
            src = self._operand_getter(prim.value)
            mask = (1 << META_WIDTHS[key]) - 1
            if key == "is_internal":
                def run(headers, order, meta, params):
                    meta.is_internal = bool(src(headers, meta, params) & 1)
            elif key == "egress_spec":
                def run(headers, order, meta, params):
                    meta.egress_spec = src(headers, meta, params) & mask
            else:
                def run(headers, order, meta, params):
                    setattr(meta, key, src(headers, meta, params) & mask)
            return run
        if op in ("set_field", "add_to_field"):
            h, f = prim.field.split(".")
            mask = (1 << self._headers[h].widths[f]) - 1
            src = self._operand_getter(prim.value)
            if op == "set_field":
                def run(headers, order, meta, params, _h=h, _f=f):
                    hd = headers.get(_h)
                    if hd is not None:
                        hd[_f] = src(headers, meta, params) & mask
            else:
                def run(headers, order, meta, params, _h=h, _f=f):
                    hd = headers.get(_h)
                    if hd is not None:
                        hd[_f] = (hd[_f] + src(headers, meta, params)) & mask
            return run
        if op == "push_header":
            ch = self._headers[prim.header]
            empty = {fname: 0 for fname, _, _ in ch.plan}

            def run(headers, order, meta, params, _n=prim.header):
                if _n in headers:
                    raise PipelineError(f"push of already-present header {_n!r}")
                headers[_n] = dict(empty)
                order.insert(0, _n)

            return run
        if op == "pop_header":
            def run(headers, order, meta, params, _n=prim.header):
                if headers.pop(_n, None) is not None:
                    order.remove(_n)

            return run
        raise AssertionError(f"unhandled primitive {op}")

    def _new_ctable(self, t: Table) -> _CTable:
        ct = _CTable()
        ct.name = t.name
        kinds = t.kinds()
        ct.getters = [_mk_getter(ref) for ref, _ in t.keys]
        if not t.keys:
            ct.kind = _KEYLESS
        elif "lpm" in kinds:
            ct.kind = _LPM
            ct.lpm_pos = kinds.index("lpm")
            ref = t.keys[ct.lpm_pos][0]
            ct.lpm_width = self._ref_width(ref)
            ct.lpm_plans = []  # [(prefix_len, {masked key tuple: ActionCall})]
        elif "ternary" in kinds:
            ct.kind = _TERNARY
            ct.ternary_rows = []
        else:
            ct.kind = _EXACT
            ct.exact_map = {}
        ct.default = ActionCall(t.default_action, dict(t.default_params))
        return ct

    def _ref_width(self, ref: str) -> int:
        h, f = ref.split(".")
        if h == "meta":
            return META_WIDTHS[f]
        return self._headers[h].widths[f]

    def _compile_statements(self, stmts):
        out = []
        for s in stmts:
            if isinstance(s, Apply):
                out.append(("t", self._tables[s.table]))
            elif isinstance(s, If):
                out.append(("i", s.meta, s.op == "eq", s.value, self._compile_statements(s.then)))
        return out

    # -- entry installation ----------------------------------------------

    def install(self, entries: list[TableEntry]) -> None:
        """Install entries on top of whatever is already present. Shape
        errors (arity, kind, priority, parameter mismatches) raise
        InstallError here, never at lookup time."""
        for idx, e in enumerate(entries):
            t = self.program.table(e.table)
            if t is None:
                raise InstallError(f"entry {idx}: unknown table {e.table!r}")
            ct = self._tables[e.table]
            if len(e.match) != len(t.keys):
                raise InstallError(
                    f"entry {idx}: table {t.name!r} declares {len(t.keys)} keys, entry has {len(e.match)}"
                )
            if e.action not in t.allowed_actions:
                raise InstallError(f"entry {idx}: action {e.action!r} not allowed on table {t.name!r}")
            adef = self._action_defs[e.action]
            if set(e.params) != adef.param_names():
                raise InstallError(
                    f"entry {idx}: params {sorted(e.params)} do not match action "
                    f"{e.action!r} signature {sorted(adef.param_names())}"
                )
            has_ternary = ct.kind == _TERNARY
            if has_ternary and e.priority is None:
                raise InstallError(f"entry {idx}: ternary table {t.name!r} requires a priority")
            if not has_ternary and e.priority is not None:
                raise InstallError(f"entry {idx}: priority given for non-ternary table {t.name!r}")
            call = ActionCall(e.action, dict(e.params))
            kinds = t.kinds()
            for spec, (ref, kind) in zip(e.match, t.keys):
                want = {MatchExact: "exact", MatchLpm: "lpm", MatchTernary: "ternary"}[type(spec)]
                if want != kind:
                    raise InstallError(f"entry {idx}: {want} match given for {kind} key {ref!r}")
                w = self._ref_width(ref)
                if isinstance(spec, MatchLpm) and not 0 <= spec.prefix_len <= w:
                    raise InstallError(f"entry {idx}: prefix_len {spec.prefix_len} outside 0..{w}")

            if ct.kind == _EXACT:
                key = tuple(m.value for m in e.match)
                ct.exact_map[key] = call
            elif ct.kind == _KEYLESS:
                raise InstallError(f"entry {idx}: table {t.name!r} has no keys")
            elif ct.kind == _LPM:
                pos = ct.lpm_pos
                spec = e.match[pos]
                plen = spec.prefix_len
                masked = spec.value >> (ct.lpm_width - plen) if plen else 0
                key = tuple(
                    masked if i == pos else m.value for i, m in enumerate(e.match)
                )
                for pl, table in ct.lpm_plans:
                    if pl == plen:
                        table[key] = call
                        break
                else:
                    ct.lpm_plans.append((plen, {key: call}))
                    ct.lpm_plans.sort(key=lambda x: -x[0])
            else:  # ternary
                masks = tuple(m.mask if isinstance(m, MatchTernary) else None for m in e.match)
                values = tuple(
                    (m.value & m.mask) if isinstance(m, MatchTernary) else m.value for m in e.match
                )
                ct.ternary_rows.append((e.priority, len(ct.ternary_rows), masks, values, call))
                # highest priority first; install order breaks ties
                ct.ternary_rows.sort(key=lambda r: (-r[0], r[1]))

    # -- execution ---------------------------------------------------------

    def parse(self, wire: bytes, ingress_port: int):
        """Run the parser: returns (headers, order, meta, consumed bytes)."""
        meta = Metadata(ingress_port)
        headers: dict = {}
        order: list = []
        pos = 0
        st = self._start
        wlen = len(wire)
        while True:
            ch = st.header
            end = pos + ch.nbytes
            if end > wlen:
                raise ParseError(st.name, f"needed {ch.nbytes} bytes, had {wlen - pos}")
            if ch.name in headers:
                raise ParseError(st.name, f"header {ch.name!r} extracted twice")
            d = ch.unpack(wire[pos:end])
            headers[ch.name] = d
            order.append(ch.name)
            pos = end
            if ch.pcp_field is not None:
                meta.pcp = d[ch.pcp_field]
            if st.internal_from is not None:
                hname, dstf, srcf = st.internal_from
                outer = headers.get(hname)
                if outer is None:
                    raise ParseError(st.name, f"internal marker header {hname!r} not extracted")
                meta.is_internal = True
                meta.orig_ingress_port = outer[srcf] & 0xFF
                meta.egress_spec = outer[dstf] & 0xFF
            if st.select is None:
                nxt = st.default
            else:
                sh, sf = st.select
                hd = headers.get(sh)
                if hd is None:
                    raise ParseError(st.name, f"select field {sh}.{sf} not available")
                nxt = st.cases.get(hd[sf], st.default)
            if nxt == ACCEPT:
                return headers, order, meta, pos
            if nxt == REJECT:
                raise ParseError(st.name, "explicit reject")
            st = self._states[nxt]

    def lookup(self, ct: _CTable, headers: dict, meta: Metadata) -> ActionCall:
        if ct.kind == _KEYLESS:
            return ct.default
        vals = tuple(g(headers, meta) for g in ct.getters)
        if ct.kind == _EXACT:
            if None in vals:
                return ct.default
            return ct.exact_map.get(vals, ct.default)
        if ct.kind == _LPM:
            if None in vals:
                return ct.default
            pos = ct.lpm_pos
            w = ct.lpm_width
            v = vals[pos]
            for plen, table in ct.lpm_plans:
                masked = v >> (w - plen) if plen else 0
                key = vals[:pos] + (masked,) + vals[pos + 1 :]
                hit = table.get(key)
                if hit is not None:
                    return hit
            return ct.default
        # ternary: rows are pre-sorted by priority then install order
        for _, _, masks, values, call in ct.ternary_rows:
            ok = True
            for v, m, want in zip(vals, masks, values):
                if v is None:
                    ok = False
                    break
                if m is None:
                    if v != want:
                        ok = False
                        break
                elif (v & m) != want:
                    ok = False
                    break
            if ok:
                return call
        return ct.default

    def _run(self, steps, headers, order, meta, trace):
        for step in steps:
            if step[0] == "t":
                ct = step[1]
                call = self.lookup(ct, headers, meta)
                params = call.params
                for f in self._actions[call.action]:
                    f(headers, order, meta, params)
                if trace is not None:
                    trace.append((ct.name, call))
            else:
                _, key, is_eq, value, body = step
                if (meta.get(key) == value) == is_eq:
                    self._run(body, headers, order, meta, trace)

    def emit(self, headers: dict, order: list) -> bytes:
        out = bytearray()
        for name in order:
            out += self._headers[name].pack(headers[name])
        return bytes(out)

    def execute(self, wire: bytes, ingress_port: int, want_trace: bool = False) -> ExecResult:
        """Parse, run ingress then egress, and re-serialize. Parse and
        pipeline faults resolve to Drop with the error recorded."""
        try:
            headers, order, meta, consumed = self.parse(wire, ingress_port)
        except ParseError as pe:
            meta = Metadata(ingress_port)
            meta.egress_spec = EGRESS_DROP
            return ExecResult(Disposition.drop(), b"", meta, {}, [], 0, parse_error=pe)
        trace = [] if want_trace else None
        try:
            self._run(self._ingress, headers, order, meta, trace)
            self._run(self._egress, headers, order, meta, trace)
        except PipelineError as pe:
            meta.egress_spec = EGRESS_DROP
            return ExecResult(
                Disposition.drop(), b"", meta, headers, order, consumed,
                trace=trace or [], pipeline_error=pe,
            )
        out = self.emit(headers, order) + wire[consumed:]
        if meta.egress_spec is None or meta.egress_spec == EGRESS_DROP:
            disp = Disposition.drop()
        else:
            disp = Disposition.forward(meta.egress_spec)
        return ExecResult(disp, out, meta, headers, order, consumed, trace=trace or [])


# --- convenience wrappers matching the one-shot API ----------------------


def parse_packet(program: Program, wire: bytes, ingress_port: int):
    """Parse a packet against a validated program; returns (headers, meta)."""
    cp = CompiledProgram(program)
    headers, _, meta, _ = cp.parse(wire, ingress_port)
    return headers, meta


def apply_table(
    program: Program,
    table: str | Table,
    entries: list[TableEntry],
    headers: dict,
    meta: Metadata,
) -> ActionCall:
    """One-shot table lookup: installs entries and returns the selected call."""
    tname = table if isinstance(table, str) else table.name
    cp = CompiledProgram(program, [e for e in entries if e.table == tname])
    return cp.lookup(cp._tables[tname], headers, meta)


def execute_pipeline(
    program: Program, entries: list[TableEntry], wire: bytes, ingress_port: int, want_trace: bool = False
) -> ExecResult:
    """One-shot execution; compile a CompiledProgram directly for bulk use."""
    return CompiledProgram(program, entries).execute(wire, ingress_port, want_trace)
