"""JSON (de)serialization of programs and table entries.

The document format is deliberately strict: unknown keys and missing
required keys are errors, each reported with a JSON-path location so a
misplaced field in a large program file is easy to find. Loading checks
document shape only; semantic checks live in ir.validate().
"""

from __future__ import annotations

import json
from pathlib import Path

from .ir import (
    ACCEPT,
    Action,
    Apply,
    HeaderType,
    If,
    MatchExact,
    MatchLpm,
    MatchTernary,
    Operand,
    ParserState,
    Primitive,
    PRIMITIVE_OPS,
    Program,
    Statement,
    Table,
    TableEntry,
)


class FormatError(ValueError):
    """Malformed document: carries the JSON path of the offending node."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def parse_value(v, path: str = "$") -> int:
    """Accept integers plus the readable spellings used in entry files:
    hex strings, dotted IPv4, and colon-separated MAC addresses."""
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, int):
        return v
    if isinstance(v, str):
        s = v.strip()
        try:
            if s.lower().startswith("0x"):
                return int(s, 16)
            if ":" in s:
                parts = s.split(":")
                return int.from_bytes(bytes(int(b, 16) for b in parts), "big")
            if s.count(".") == 3:
                octets = [int(o) for o in s.split(".")]
                if all(0 <= o <= 255 for o in octets):
                    return int.from_bytes(bytes(octets), "big")
                raise ValueError
            return int(s, 10)
        except ValueError:
            raise FormatError(path, f"cannot parse value {v!r}") from None
    raise FormatError(path, f"expected a number, got {type(v).__name__}")


def _expect(obj, typ, path):
    if not isinstance(obj, typ):
        raise FormatError(path, f"expected {typ.__name__}, got {type(obj).__name__}")
    return obj


def _take(obj: dict, key: str, path: str, required: bool = True, default=None):
    if key not in obj:
        if required:
            raise FormatError(path, f"missing required key {key!r}")
        return default
    return obj[key]


def _no_extra(obj: dict, allowed: set[str], path: str) -> None:
    extra = set(obj) - allowed
    if extra:
        raise FormatError(path, f"unknown keys: {sorted(extra)}")


def _load_operand(v, path: str) -> Operand:
    if isinstance(v, dict):
        _no_extra(v, {"param", "field", "meta", "value"}, path)
        if len(v) != 1:
            raise FormatError(path, "operand object must have exactly one key")
        k, ref = next(iter(v.items()))
        if k == "param":
            return Operand.param(_expect(ref, str, path))
        if k == "field":
            return Operand.hfield(_expect(ref, str, path))
        if k == "meta":
            return Operand.meta(_expect(ref, str, path))
        return Operand.lit(parse_value(ref, path))
    if isinstance(v, (int, str)):
        # bare literals: allow negative ints for add_to_field
        if isinstance(v, int):
            return Operand.lit(v)
        return Operand.lit(parse_value(v, path))
    raise FormatError(path, "operand must be a literal or a one-key object")


def _load_primitive(obj, path: str) -> Primitive:
    _expect(obj, dict, path)
    op = _take(obj, "op", path)
    if op not in PRIMITIVE_OPS:
        raise FormatError(f"{path}.op", f"unknown primitive {op!r}")
    slots = PRIMITIVE_OPS[op]
    _no_extra(obj, {"op", *slots}, path)
    prim = Primitive(op=op)
    if "field" in slots:
        prim.field = _expect(_take(obj, "field", path), str, f"{path}.field")
    if "meta" in slots:
        prim.meta = _expect(_take(obj, "meta", path), str, f"{path}.meta")
    if "header" in slots:
        prim.header = _expect(_take(obj, "header", path), str, f"{path}.header")
    if "value" in slots:
        prim.value = _load_operand(_take(obj, "value", path), f"{path}.value")
    return prim


def _load_statements(arr, path: str) -> list[Statement]:
    _expect(arr, list, path)
    out: list[Statement] = []
    for i, s in enumerate(arr):
        sp = f"{path}[{i}]"
        _expect(s, dict, sp)
        if "apply" in s:
            _no_extra(s, {"apply"}, sp)
            out.append(Apply(_expect(s["apply"], str, sp)))
        elif "if" in s:
            _no_extra(s, {"if", "then"}, sp)
            cond = _expect(s["if"], dict, f"{sp}.if")
            meta = _expect(_take(cond, "meta", f"{sp}.if"), str, f"{sp}.if.meta")
            if "eq" in cond:
                op, val = "eq", cond["eq"]
            elif "ne" in cond:
                op, val = "ne", cond["ne"]
            else:
                raise FormatError(f"{sp}.if", "condition needs an 'eq' or 'ne' key")
            _no_extra(cond, {"meta", "eq", "ne"}, f"{sp}.if")
            out.append(If(meta, op, parse_value(val, f"{sp}.if"), _load_statements(s.get("then", []), f"{sp}.then")))
        else:
            raise FormatError(sp, "statement must be an 'apply' or an 'if'")
    return out


def load_program(doc: str | dict) -> Program:
    """Build a Program from a JSON document (text or already-parsed dict)."""
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as e:
            raise FormatError("$", f"malformed JSON: {e}") from None
    _expect(doc, dict, "$")
    _no_extra(doc, {"headers", "parser", "actions", "tables", "ingress", "egress"}, "$")

    headers = []
    for i, h in enumerate(_expect(_take(doc, "headers", "$"), list, "$.headers")):
        hp = f"$.headers[{i}]"
        _expect(h, dict, hp)
        _no_extra(h, {"name", "fields"}, hp)
        name = _expect(_take(h, "name", hp), str, f"{hp}.name")
        fields = []
        for j, f in enumerate(_expect(_take(h, "fields", hp), list, f"{hp}.fields")):
            fp = f"{hp}.fields[{j}]"
            _expect(f, list, fp)
            if len(f) != 2:
                raise FormatError(fp, "field must be a [name, width] pair")
            fields.append((_expect(f[0], str, fp), _expect(f[1], int, fp)))
        headers.append(HeaderType(name, fields))

    pobj = _expect(_take(doc, "parser", "$"), dict, "$.parser")
    _no_extra(pobj, {"start", "states"}, "$.parser")
    start = _expect(_take(pobj, "start", "$.parser"), str, "$.parser.start")
    states = []
    for i, s in enumerate(_expect(_take(pobj, "states", "$.parser"), list, "$.parser.states")):
        sp = f"$.parser.states[{i}]"
        _expect(s, dict, sp)
        _no_extra(s, {"name", "extract", "select", "cases", "default", "internal_ports_from"}, sp)
        cases = []
        for j, c in enumerate(_expect(s.get("cases", []), list, f"{sp}.cases")):
            cp = f"{sp}.cases[{j}]"
            _expect(c, dict, cp)
            _no_extra(c, {"value", "next"}, cp)
            cases.append((parse_value(_take(c, "value", cp), cp), _expect(_take(c, "next", cp), str, cp)))
        states.append(
            ParserState(
                name=_expect(_take(s, "name", sp), str, sp),
                extract=_expect(_take(s, "extract", sp), str, sp),
                select_field=s.get("select"),
                cases=cases,
                default_next=s.get("default", ACCEPT),
                internal_ports_from=s.get("internal_ports_from"),
            )
        )

    actions = []
    for i, a in enumerate(_expect(_take(doc, "actions", "$"), list, "$.actions")):
        ap = f"$.actions[{i}]"
        _expect(a, dict, ap)
        _no_extra(a, {"name", "params", "primitives"}, ap)
        params = []
        for j, pr in enumerate(_expect(a.get("params", []), list, f"{ap}.params")):
            pp = f"{ap}.params[{j}]"
            _expect(pr, list, pp)
            if len(pr) != 2:
                raise FormatError(pp, "param must be a [name, width] pair")
            params.append((_expect(pr[0], str, pp), _expect(pr[1], int, pp)))
        prims = [
            _load_primitive(pm, f"{ap}.primitives[{j}]")
            for j, pm in enumerate(_expect(a.get("primitives", []), list, f"{ap}.primitives"))
        ]
        actions.append(Action(_expect(_take(a, "name", ap), str, ap), params, prims))

    tables = []
    for i, t in enumerate(_expect(_take(doc, "tables", "$"), list, "$.tables")):
        tp = f"$.tables[{i}]"
        _expect(t, dict, tp)
        _no_extra(t, {"name", "keys", "actions", "default"}, tp)
        keys = []
        for j, k in enumerate(_expect(_take(t, "keys", tp), list, f"{tp}.keys")):
            kp = f"{tp}.keys[{j}]"
            _expect(k, list, kp)
            if len(k) != 2:
                raise FormatError(kp, "key must be a [field, kind] pair")
            keys.append((_expect(k[0], str, kp), _expect(k[1], str, kp)))
        dflt = _expect(_take(t, "default", tp), dict, f"{tp}.default")
        _no_extra(dflt, {"action", "params"}, f"{tp}.default")
        dparams = {
            k: parse_value(v, f"{tp}.default.params.{k}")
            for k, v in _expect(dflt.get("params", {}), dict, f"{tp}.default.params").items()
        }
        tables.append(
            Table(
                name=_expect(_take(t, "name", tp), str, tp),
                keys=keys,
                allowed_actions=list(_expect(_take(t, "actions", tp), list, f"{tp}.actions")),
                default_action=_expect(_take(dflt, "action", f"{tp}.default"), str, f"{tp}.default.action"),
                default_params=dparams,
            )
        )

    ingress = _load_statements(_take(doc, "ingress", "$"), "$.ingress")
    egress = _load_statements(_take(doc, "egress", "$"), "$.egress")
    return Program(headers, states, start, actions, tables, ingress, egress)


def load_program_file(path: str | Path) -> Program:
    return load_program(Path(path).read_text())


def load_entries(doc: str | dict) -> list[TableEntry]:
    """Parse a table-entry file: {"entries": [{table, match, action, params,
    priority?}, ...]}. Match items are {"value"} (exact),
    {"value","prefix_len"} (lpm) or {"value","mask"} (ternary)."""
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as e:
            raise FormatError("$", f"malformed JSON: {e}") from None
    _expect(doc, dict, "$")
    _no_extra(doc, {"entries"}, "$")
    out = []
    for i, e in enumerate(_expect(_take(doc, "entries", "$"), list, "$.entries")):
        ep = f"$.entries[{i}]"
        _expect(e, dict, ep)
        _no_extra(e, {"table", "match", "action", "params", "priority"}, ep)
        match = []
        for j, m in enumerate(_expect(e.get("match", []), list, f"{ep}.match")):
            mp = f"{ep}.match[{j}]"
            _expect(m, dict, mp)
            _no_extra(m, {"value", "prefix_len", "mask"}, mp)
            val = parse_value(_take(m, "value", mp), mp)
            if "prefix_len" in m:
                match.append(MatchLpm(val, _expect(m["prefix_len"], int, mp)))
            elif "mask" in m:
                match.append(MatchTernary(val, parse_value(m["mask"], mp)))
            else:
                match.append(MatchExact(val))
        params = {
            k: parse_value(v, f"{ep}.params.{k}")
            for k, v in _expect(e.get("params", {}), dict, f"{ep}.params").items()
        }
        out.append(
            TableEntry(
                table=_expect(_take(e, "table", ep), str, ep),
                match=match,
                action=_expect(_take(e, "action", ep), str, ep),
                params=params,
                priority=e.get("priority"),
            )
        )
    return out


def load_entries_file(path: str | Path) -> list[TableEntry]:
    return load_entries(Path(path).read_text())


# --- serialization back to plain dicts -----------------------------------


def _operand_to_obj(op: Operand):
    if op.kind == "lit":
        return {"value": op.ref}
    return {op.kind if op.kind != "field" else "field": op.ref} if op.kind != "param" else {"param": op.ref}


def _primitive_to_obj(prim: Primitive) -> dict:
    obj: dict = {"op": prim.op}
    for slot in PRIMITIVE_OPS[prim.op]:
        if slot == "field":
            obj["field"] = prim.field
        elif slot == "meta":
            obj["meta"] = prim.meta
        elif slot == "header":
            obj["header"] = prim.header
        elif slot == "value":
            obj["value"] = _operand_to_obj(prim.value)
    return obj


def _statement_to_obj(s: Statement) -> dict:
    if isinstance(s, Apply):
        return {"apply": s.table}
    return {
        "if": {"meta": s.meta, s.op: s.value},
        "then": [_statement_to_obj(x) for x in s.then],
    }


def program_to_dict(p: Program) -> dict:
    return {
        "headers": [{"name": h.name, "fields": [[n, w] for n, w in h.fields]} for h in p.headers],
        "parser": {
            "start": p.start,
            "states": [
                {
                    "name": s.name,
                    "extract": s.extract,
                    **({"select": s.select_field} if s.select_field else {}),
                    **({"cases": [{"value": v, "next": n} for v, n in s.cases]} if s.cases else {}),
                    "default": s.default_next,
                    **(
                        {"internal_ports_from": s.internal_ports_from}
                        if s.internal_ports_from
                        else {}
                    ),
                }
                for s in p.parser
            ],
        },
        "actions": [
            {
                "name": a.name,
                "params": [[n, w] for n, w in a.params],
                "primitives": [_primitive_to_obj(pm) for pm in a.primitives],
            }
            for a in p.actions
        ],
        "tables": [
            {
                "name": t.name,
                "keys": [[r, k] for r, k in t.keys],
                "actions": list(t.allowed_actions),
                "default": {"action": t.default_action, "params": dict(t.default_params)},
            }
            for t in p.tables
        ],
        "ingress": [_statement_to_obj(s) for s in p.ingress],
        "egress": [_statement_to_obj(s) for s in p.egress],
    }


def entries_to_dict(entries: list[TableEntry]) -> dict:
    items = []
    for e in entries:
        m = []
        for spec in e.match:
            if isinstance(spec, MatchLpm):
                m.append({"value": spec.value, "prefix_len": spec.prefix_len})
            elif isinstance(spec, MatchTernary):
                m.append({"value": spec.value, "mask": spec.mask})
            else:
                m.append({"value": spec.value})
        item = {"table": e.table, "match": m, "action": e.action, "params": dict(e.params)}
        if e.priority is not None:
            item["priority"] = e.priority
        items.append(item)
    return {"entries": items}
