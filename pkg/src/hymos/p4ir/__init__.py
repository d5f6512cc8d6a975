"""Match+action program IR, JSON loading, validation, and the reference
interpreter (which doubles as the single-card execution oracle)."""

from .ir import (
    ACCEPT,
    Action,
    Apply,
    Diagnostic,
    Disposition,
    EGRESS_DROP,
    HeaderType,
    If,
    MatchExact,
    MatchLpm,
    MatchTernary,
    META_WIDTHS,
    Operand,
    ParserState,
    Primitive,
    Program,
    REJECT,
    Table,
    TableEntry,
    validate,
)
from .loader import (
    FormatError,
    entries_to_dict,
    load_entries,
    load_entries_file,
    load_program,
    load_program_file,
    parse_value,
    program_to_dict,
)
from .interp import (
    ActionCall,
    CompiledProgram,
    ExecResult,
    InstallError,
    Metadata,
    ParseError,
    PipelineError,
    ValidationFailed,
    apply_table,
    execute_pipeline,
    parse_packet,
)

__all__ = [
    "ACCEPT",
    "Action",
    "ActionCall",
    "Apply",
    "CompiledProgram",
    "Diagnostic",
    "Disposition",
    "EGRESS_DROP",
    "ExecResult",
    "FormatError",
    "HeaderType",
    "If",
    "InstallError",
    "MatchExact",
    "MatchLpm",
    "MatchTernary",
    "META_WIDTHS",
    "Metadata",
    "Operand",
    "ParseError",
    "ParserState",
    "PipelineError",
    "Primitive",
    "Program",
    "REJECT",
    "Table",
    "TableEntry",
    "ValidationFailed",
    "apply_table",
    "entries_to_dict",
    "execute_pipeline",
    "load_entries",
    "load_entries_file",
    "load_program",
    "load_program_file",
    "parse_packet",
    "parse_value",
    "program_to_dict",
    "validate",
]
