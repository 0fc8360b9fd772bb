"""The transform-script language: parsing, serialization, validation.

A script is one action applied to named fields, written the way you
would say it::

    RENAME > 'occupation_state_date' < ['EmptyFrom']
    CATEGORISE > 'occupation_state' :: 'Vacant' < 'EmptyFrom' :: [True]
    UNITE > 'full_address' < ' ; ' :: ['addr_1', 'addr_2', 'postcode']

``>`` reads "into the destination", ``<`` reads "from the source", and
``::`` attaches a modifying term to the clause on its left. Terms are
single-quoted with ``''`` escaping an embedded quote; whitespace between
tokens (including newlines) carries no meaning. Parsing is strict about
shape and position — errors carry the byte offset and the tokens that
would have been accepted — while field names are taken on faith until
:func:`validate_against_schemas` checks them against real schemas.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

from .tabular import quote_text

__all__ = [
    "ACTION_NAMES",
    "ActionShape",
    "BooleanItem",
    "DatedField",
    "FieldRef",
    "IntegerItem",
    "LiteralItem",
    "ParsedAction",
    "Placeholder",
    "ScriptError",
    "ScriptSyntaxError",
    "SourceItem",
    "StructureViolation",
    "UnknownActionError",
    "action_shape",
    "parse_script",
    "referenced_source_fields",
    "serialize_action",
    "validate_against_schemas",
    "validate_structure",
]

ACTION_NAMES = (
    "CALCULATE",
    "CATEGORISE",
    "COLLATE",
    "DEBLANK",
    "DEDUPE",
    "DELETE_ROWS",
    "NEW",
    "PIVOT_CATEGORIES",
    "PIVOT_LONGER",
    "RENAME",
    "SELECT",
    "SELECT_NEWEST",
    "SELECT_OLDEST",
    "SEPARATE",
    "UNITE",
)


class ScriptError(Exception):
    """Base class for script parsing and validation failures."""


class ScriptSyntaxError(ScriptError):
    """Malformed script text, with position and what was expected."""

    def __init__(self, message: str, *, offset: int, expected: Sequence[str] = ()):
        self.offset = offset
        self.expected = tuple(expected)
        suffix = f" at byte {offset}"
        if self.expected:
            suffix += "; expected " + " | ".join(self.expected)
        super().__init__(message + suffix)


class UnknownActionError(ScriptError):
    def __init__(self, name: str, offset: int):
        self.name = name
        self.offset = offset
        super().__init__(
            f"unknown action {name!r} at byte {offset}; actions are: "
            + ", ".join(ACTION_NAMES)
        )


# ----------------------------------------------------------------------
# source items

@dataclass(frozen=True)
class FieldRef:
    """A source column read by the action."""
    name: str


@dataclass(frozen=True)
class LiteralItem:
    """Quoted text used as a value, not a column name."""
    text: str


@dataclass(frozen=True)
class BooleanItem:
    value: bool


@dataclass(frozen=True)
class IntegerItem:
    value: int


@dataclass(frozen=True)
class Placeholder:
    """``~`` — a deliberately skipped position."""


@dataclass(frozen=True)
class SignedField:
    """``+'col'`` or ``-'col'`` — a column with an arithmetic sign."""
    sign: str
    name: str


@dataclass(frozen=True)
class DatedField:
    """``'value_col' + 'date_col'`` — a value column ranked by a date column."""
    value_field: str
    date_field: str


SourceItem = Union[
    FieldRef, LiteralItem, BooleanItem, IntegerItem,
    Placeholder, SignedField, DatedField,
]


@dataclass(frozen=True)
class ParsedAction:
    """One parsed script. ``raw`` keeps the text exactly as written."""

    action: str
    dest_fields: tuple[str, ...] = ()
    dest_term: str | bool | None = None
    source_term: str | None = None
    source_items: tuple[SourceItem, ...] = ()
    raw: str = ""

    def structure(self) -> tuple:
        """Everything that matters for equality; the raw text does not."""
        return (
            self.action, self.dest_fields, self.dest_term,
            self.source_term, self.source_items,
        )


# ----------------------------------------------------------------------
# tokenizer

_PUNCT = {
    ">": "GT", "<": "LT", "[": "LBRACKET", "]": "RBRACKET",
    ",": "COMMA", "~": "TILDE", "+": "PLUS", "-": "MINUS",
}


@dataclass(frozen=True)
class _Token:
    kind: str
    value: object
    offset: int  # byte offset into the raw script


def _tokenize(text: str) -> list[_Token]:
    raw = text.encode("utf-8")
    tokens: list[_Token] = []
    i = 0
    n = len(raw)
    while i < n:
        byte = raw[i:i + 1]
        if byte.isspace():
            i += 1
            continue
        ch = byte.decode("ascii", "replace")
        if ch == ":":
            if raw[i:i + 2] == b"::":
                tokens.append(_Token("DCOLON", "::", i))
                i += 2
                continue
            raise ScriptSyntaxError("lone ':'", offset=i, expected=["'::'"])
        if ch in _PUNCT:
            tokens.append(_Token(_PUNCT[ch], ch, i))
            i += 1
            continue
        if ch == "'":
            start = i
            i += 1
            parts: list[bytes] = []
            while True:
                j = raw.find(b"'", i)
                if j < 0:
                    raise ScriptSyntaxError(
                        "unterminated quote", offset=start, expected=["'"]
                    )
                if raw[j + 1:j + 2] == b"'":
                    parts.append(raw[i:j] + b"'")
                    i = j + 2
                    continue
                parts.append(raw[i:j])
                i = j + 1
                break
            tokens.append(_Token("QUOTED", b"".join(parts).decode("utf-8"), start))
            continue
        if ch.isdigit():
            start = i
            while i < n and raw[i:i + 1].isdigit():
                i += 1
            tokens.append(_Token("INT", int(raw[start:i]), start))
            continue
        if ch.isalpha() or ch == "_":
            start = i
            while i < n and (raw[i:i + 1].isalnum() or raw[i:i + 1] == b"_"):
                i += 1
            word = raw[start:i].decode("ascii", "replace")
            if word == "True":
                tokens.append(_Token("BOOL", True, start))
            elif word == "False":
                tokens.append(_Token("BOOL", False, start))
            else:
                tokens.append(_Token("NAME", word, start))
            continue
        raise ScriptSyntaxError(f"unexpected character {ch!r}", offset=i)
    tokens.append(_Token("EOF", None, n))
    return tokens


# ----------------------------------------------------------------------
# parser

class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self, ahead: int = 0) -> _Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def take(self) -> _Token:
        token = self.tokens[self.pos]
        if token.kind != "EOF":
            self.pos += 1
        return token

    def expect(self, *kinds: str, expected: Sequence[str]) -> _Token:
        token = self.peek()
        if token.kind not in kinds:
            raise ScriptSyntaxError(
                f"unexpected {_describe(token)}", offset=token.offset,
                expected=expected,
            )
        return self.take()

    # grammar: script := ACTION [ ">" dest ] [ "<" source ]
    def parse(self) -> ParsedAction:
        head = self.peek()
        if head.kind != "NAME":
            raise ScriptSyntaxError(
                f"scripts start with an action name, got {_describe(head)}",
                offset=head.offset, expected=["ACTION"],
            )
        self.take()
        action = str(head.value)
        if action not in ACTION_NAMES:
            raise UnknownActionError(action, head.offset)

        dest_fields: tuple[str, ...] = ()
        dest_term: str | bool | None = None
        source_term: str | None = None
        items: tuple[SourceItem, ...] = ()

        if self.peek().kind == "GT":
            self.take()
            dest_fields, dest_term = self._dest()
        if self.peek().kind == "LT":
            self.take()
            source_term, items = self._source(action)
        tail = self.peek()
        if tail.kind != "EOF":
            raise ScriptSyntaxError(
                f"trailing {_describe(tail)}", offset=tail.offset,
                expected=["end of script"],
            )
        return ParsedAction(
            action=action, dest_fields=dest_fields, dest_term=dest_term,
            source_term=source_term, source_items=_assign_roles(action, items),
            raw=self.text,
        )

    # dest := quoted [ "::" term ] | "[" quoted { "," quoted } "]"
    def _dest(self) -> tuple[tuple[str, ...], str | bool | None]:
        if self.peek().kind == "LBRACKET":
            self.take()
            names = [self.expect("QUOTED", expected=["'field'"]).value]
            while self.peek().kind == "COMMA":
                self.take()
                names.append(self.expect("QUOTED", expected=["'field'"]).value)
            self.expect("RBRACKET", expected=["']'", "','"])
            return tuple(str(n) for n in names), None
        name = self.expect("QUOTED", expected=["'field'", "'['"]).value
        term: str | bool | None = None
        if self.peek().kind == "DCOLON":
            self.take()
            token = self.expect("QUOTED", "BOOL", expected=["'term'", "True", "False"])
            term = token.value  # str or bool
        return (str(name),), term

    # source := [ quoted "::" ] items
    def _source(self, action: str) -> tuple[str | None, tuple]:
        term = None
        if self.peek().kind == "QUOTED" and self.peek(1).kind == "DCOLON":
            term = str(self.take().value)
            self.take()  # '::'
        if self.peek().kind == "LBRACKET":
            self.take()
            items = []
            if self.peek().kind != "RBRACKET":
                items.append(self._item())
                while self.peek().kind == "COMMA":
                    self.take()
                    items.append(self._item())
            self.expect("RBRACKET", expected=["']'", "','"])
            return term, tuple(items)
        return term, (self._item(),)

    def _item(self):
        token = self.peek()
        if token.kind == "QUOTED":
            self.take()
            if self.peek().kind == "PLUS" and self.peek(1).kind == "QUOTED":
                self.take()
                date_field = self.take()
                return ("dated", str(token.value), str(date_field.value))
            return ("quoted", str(token.value))
        if token.kind == "BOOL":
            self.take()
            return ("bool", bool(token.value))
        if token.kind == "INT":
            self.take()
            return ("int", int(token.value))
        if token.kind == "TILDE":
            self.take()
            return ("placeholder",)
        if token.kind in ("PLUS", "MINUS"):
            self.take()
            name = self.expect("QUOTED", expected=["'field'"])
            return ("signed", str(token.value), str(name.value))
        raise ScriptSyntaxError(
            f"unexpected {_describe(token)}", offset=token.offset,
            expected=["'item'", "True", "False", "INTEGER", "~", "+", "-"],
        )


def _describe(token: _Token) -> str:
    if token.kind == "EOF":
        return "end of script"
    return f"{token.kind} {token.value!r}"


# Quoted items are column references for most actions, values for the
# actions that write or match constants.
_LITERAL_ITEM_ACTIONS = {"NEW", "CATEGORISE"}


def _assign_roles(action: str, items: tuple) -> tuple[SourceItem, ...]:
    out: list[SourceItem] = []
    for item in items:
        kind = item[0]
        if kind == "quoted":
            if action in _LITERAL_ITEM_ACTIONS:
                out.append(LiteralItem(item[1]))
            else:
                out.append(FieldRef(item[1]))
        elif kind == "bool":
            out.append(BooleanItem(item[1]))
        elif kind == "int":
            out.append(IntegerItem(item[1]))
        elif kind == "placeholder":
            out.append(Placeholder())
        elif kind == "signed":
            out.append(SignedField(item[1], item[2]))
        elif kind == "dated":
            out.append(DatedField(item[1], item[2]))
        else:  # pragma: no cover - parser emits only the kinds above
            raise ScriptError(f"unhandled item kind {kind!r}")
    return tuple(out)


def parse_script(text: str) -> ParsedAction:
    """Parse one script; raises ScriptSyntaxError / UnknownActionError."""
    return _Parser(text).parse()


# ----------------------------------------------------------------------
# serialization

def _render_item(item: SourceItem) -> str:
    if isinstance(item, (FieldRef, LiteralItem)):
        return quote_text(item.name if isinstance(item, FieldRef) else item.text)
    if isinstance(item, BooleanItem):
        return "True" if item.value else "False"
    if isinstance(item, IntegerItem):
        return str(item.value)
    if isinstance(item, Placeholder):
        return "~"
    if isinstance(item, SignedField):
        return item.sign + quote_text(item.name)
    if isinstance(item, DatedField):
        return f"{quote_text(item.value_field)} + {quote_text(item.date_field)}"
    raise ScriptError(f"cannot render {item!r}")


def serialize_action(action: ParsedAction) -> str:
    """Render the canonical text: one form per structure.

    Single space around ``>``, ``<`` and ``::``; single destination
    unbracketed; source items always bracketed; ``, `` between items.
    ``parse_script(serialize_action(a))`` is structurally ``a``.
    """
    parts = [action.action]
    if action.dest_fields:
        parts.append(">")
        if len(action.dest_fields) == 1:
            dest = quote_text(action.dest_fields[0])
            if action.dest_term is not None:
                if isinstance(action.dest_term, bool):
                    dest += " :: " + ("True" if action.dest_term else "False")
                else:
                    dest += " :: " + quote_text(action.dest_term)
            parts.append(dest)
        else:
            parts.append("[" + ", ".join(quote_text(f) for f in action.dest_fields) + "]")
    if action.source_term is not None or action.source_items:
        parts.append("<")
        source = ""
        if action.source_term is not None:
            source = quote_text(action.source_term) + " :: "
        source += "[" + ", ".join(_render_item(i) for i in action.source_items) + "]"
        parts.append(source)
    return " ".join(parts)


# ----------------------------------------------------------------------
# structural validation

@dataclass(frozen=True)
class StructureViolation:
    code: str
    message: str


@dataclass(frozen=True)
class ActionShape:
    """The clause shape an action accepts, for validators and UIs."""

    action: str
    summary: str
    dest: str              # none | one | two | many
    dest_term: str         # forbidden | required
    source_term: str | None  # None=forbidden, else the term's meaning
    item_kinds: tuple[str, ...]
    min_items: int
    max_items: int | None

    def to_dict(self) -> dict:
        return {
            "action": self.action,
            "summary": self.summary,
            "dest": self.dest,
            "dest_term": self.dest_term,
            "source_term": self.source_term,
            "item_kinds": list(self.item_kinds),
            "min_items": self.min_items,
            "max_items": self.max_items,
        }


_SHAPES = {s.action: s for s in (
    ActionShape("CALCULATE", "Sum signed source columns into one destination",
                "one", "forbidden", None, ("signed",), 1, None),
    ActionShape("CATEGORISE", "Assign a destination term where source values match",
                "one", "required", "source column", ("literal", "boolean"), 1, None),
    ActionShape("COLLATE", "Pack source columns into one array destination, in order",
                "one", "forbidden", None, ("field", "placeholder"), 1, None),
    ActionShape("DEBLANK", "Drop rows that are blank in every column",
                "none", "forbidden", None, (), 0, 0),
    ActionShape("DEDUPE", "Drop later rows identical to an earlier one",
                "none", "forbidden", None, (), 0, 0),
    ActionShape("DELETE_ROWS", "Drop rows by their stable labels",
                "none", "forbidden", None, ("integer",), 1, None),
    ActionShape("NEW", "Fill a destination with one constant value",
                "one", "forbidden", None, ("literal",), 1, 1),
    ActionShape("PIVOT_CATEGORIES", "Turn in-column header rows into a category column",
                "one", "forbidden", "source column", ("integer",), 1, None),
    ActionShape("PIVOT_LONGER", "Unpivot columns into name/value rows",
                "two", "forbidden", None, ("field",), 1, None),
    ActionShape("RENAME", "Copy one source column to a destination name",
                "one", "forbidden", None, ("field",), 1, 1),
    ActionShape("SELECT", "Copy source columns, later ones filling gaps",
                "one", "forbidden", None, ("field",), 1, None),
    ActionShape("SELECT_NEWEST", "Pick the value whose paired date is newest",
                "one", "forbidden", None, ("dated",), 1, None),
    ActionShape("SELECT_OLDEST", "Pick the value whose paired date is oldest",
                "one", "forbidden", None, ("dated",), 1, None),
    ActionShape("SEPARATE", "Split one source column into several destinations",
                "many", "forbidden", "separator text", ("field",), 1, 1),
    ActionShape("UNITE", "Join source columns into one destination",
                "one", "forbidden", "separator text", ("field",), 1, None),
)}


def action_shape(action: str) -> ActionShape:
    return _SHAPES[action]


def all_action_shapes() -> list[ActionShape]:
    return [_SHAPES[name] for name in ACTION_NAMES]


_ITEM_KIND = {
    FieldRef: "field", LiteralItem: "literal", BooleanItem: "boolean",
    IntegerItem: "integer", Placeholder: "placeholder",
    SignedField: "signed", DatedField: "dated",
}


def validate_structure(action: ParsedAction) -> list[StructureViolation]:
    """Arity and clause-shape checks that need no schema."""
    shape = _SHAPES[action.action]
    out: list[StructureViolation] = []

    n_dest = len(action.dest_fields)
    if shape.dest == "none" and n_dest:
        out.append(StructureViolation(
            "dest-forbidden", f"{action.action} takes no destination"))
    elif shape.dest == "one" and n_dest != 1:
        out.append(StructureViolation(
            "dest-arity", f"{action.action} needs exactly one destination, got {n_dest}"))
    elif shape.dest == "two" and n_dest != 2:
        out.append(StructureViolation(
            "dest-arity", f"{action.action} needs exactly two destinations, got {n_dest}"))
    elif shape.dest == "many" and n_dest < 1:
        out.append(StructureViolation(
            "dest-arity", f"{action.action} needs at least one destination"))

    if shape.dest_term == "required" and action.dest_term is None:
        out.append(StructureViolation(
            "dest-term-missing", f"{action.action} needs a '::' term on the destination"))
    if shape.dest_term == "forbidden" and action.dest_term is not None:
        out.append(StructureViolation(
            "dest-term-forbidden", f"{action.action} takes no destination term"))

    if shape.source_term is None and action.source_term is not None:
        out.append(StructureViolation(
            "source-term-forbidden", f"{action.action} takes no source term"))
    if shape.source_term is not None and action.source_term is None:
        out.append(StructureViolation(
            "source-term-missing",
            f"{action.action} needs a source term ({shape.source_term})"))

    n_items = len(action.source_items)
    if n_items < shape.min_items:
        out.append(StructureViolation(
            "items-missing",
            f"{action.action} needs at least {shape.min_items} source item(s), got {n_items}"))
    if shape.max_items is not None and n_items > shape.max_items:
        out.append(StructureViolation(
            "items-excess",
            f"{action.action} takes at most {shape.max_items} source item(s), got {n_items}"))

    allowed = set(shape.item_kinds)
    for item in action.source_items:
        kind = _ITEM_KIND[type(item)]
        if kind not in allowed:
            out.append(StructureViolation(
                "item-kind",
                f"{action.action} cannot take a {kind} item"
                + (f" ({_render_item(item)})" if allowed else "")))
    if action.action == "CATEGORISE" and not out:
        kinds = {_ITEM_KIND[type(i)] for i in action.source_items}
        if "boolean" in kinds and (len(action.source_items) > 1 or "literal" in kinds):
            out.append(StructureViolation(
                "item-kind",
                "CATEGORISE matches either literal values or a single "
                "presence boolean, not a mixture"))
    return out


def referenced_source_fields(action: ParsedAction) -> list[str]:
    """Source columns the action reads, in reference order."""
    fields: list[str] = []
    if action.action in ("CATEGORISE", "PIVOT_CATEGORIES") and action.source_term:
        fields.append(action.source_term)
    for item in action.source_items:
        if isinstance(item, FieldRef):
            fields.append(item.name)
        elif isinstance(item, SignedField):
            fields.append(item.name)
        elif isinstance(item, DatedField):
            fields.extend((item.value_field, item.date_field))
    return fields


@dataclass(frozen=True)
class SchemaViolation:
    code: str
    message: str


def validate_against_schemas(action: ParsedAction, source_schema,
                             dest_schema) -> list[SchemaViolation]:
    """Check every named field exists on its proper side.

    ``source_schema`` and ``dest_schema`` are SchemaModel instances;
    structural problems should be caught with validate_structure first.
    """
    out: list[SchemaViolation] = []
    for name in action.dest_fields:
        if not dest_schema.has_field(name):
            out.append(SchemaViolation(
                "unknown-dest",
                f"destination field {name!r} is not in schema {dest_schema.name!r}"))
    for name in referenced_source_fields(action):
        if not source_schema.has_field(name):
            out.append(SchemaViolation(
                "unknown-source",
                f"source field {name!r} is not in schema {source_schema.name!r}"))
    if action.action == "NEW" and not action.source_items:
        out.append(SchemaViolation(
            "missing-value", "NEW has no value to assign"))
    if (action.action == "CATEGORISE" and action.dest_term is not None
            and len(action.dest_fields) == 1
            and dest_schema.has_field(action.dest_fields[0])):
        fd = dest_schema.field(action.dest_fields[0])
        if fd.constraints.categories:
            term = action.dest_term
            text = ("true" if term else "false") if isinstance(term, bool) else term
            if text not in {t.name for t in fd.constraints.categories}:
                out.append(SchemaViolation(
                    "unknown-term",
                    f"{text!r} is not a category term of {fd.name!r}"))
    return out
