"""Database schema catalog: load, validate, narrow, and render table definitions.

The catalog is the ground truth for SQL identifier validation and the source
of the schema text that gets chunked into the retrieval corpus. Identifiers
are compared case-insensitively (Oracle-style unquoted identifiers) and are
stored uppercase.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml


class CatalogError(Exception):
    """Base class for schema catalog failures."""


class SchemaParseError(CatalogError):
    """Schema file could not be parsed; carries line/column when known."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class CatalogInvariantError(CatalogError):
    """A structural invariant is violated (duplicates, dangling FKs, empty catalog)."""


class UnknownTableError(CatalogError):
    """A table name was requested that does not exist in the catalog."""


@dataclass(frozen=True)
class ColumnDef:
    name: str
    type_name: str
    nullable: bool = True
    description: Optional[str] = None

    def __post_init__(self):
        if not self.name:
            raise CatalogInvariantError("column name must be non-empty")
        object.__setattr__(self, "name", self.name.upper())


@dataclass(frozen=True)
class ForeignKey:
    column: str
    ref_table: str
    ref_column: str

    def __post_init__(self):
        object.__setattr__(self, "column", self.column.upper())
        object.__setattr__(self, "ref_table", self.ref_table.upper())
        object.__setattr__(self, "ref_column", self.ref_column.upper())


@dataclass(frozen=True)
class TableDef:
    name: str
    columns: tuple[ColumnDef, ...]
    primary_key: tuple[str, ...] = ()
    foreign_keys: tuple[ForeignKey, ...] = ()
    description: Optional[str] = None

    def __post_init__(self):
        if not self.name:
            raise CatalogInvariantError("table name must be non-empty")
        object.__setattr__(self, "name", self.name.upper())
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "primary_key", tuple(c.upper() for c in self.primary_key))
        object.__setattr__(self, "foreign_keys", tuple(self.foreign_keys))
        seen = set()
        for col in self.columns:
            if col.name in seen:
                raise CatalogInvariantError(
                    f"duplicate column {col.name!r} in table {self.name!r}"
                )
            seen.add(col.name)
        for pk in self.primary_key:
            if pk not in seen:
                raise CatalogInvariantError(
                    f"primary key column {pk!r} not defined in table {self.name!r}"
                )
        for fk in self.foreign_keys:
            if fk.column not in seen:
                raise CatalogInvariantError(
                    f"foreign key column {fk.column!r} not defined in table {self.name!r}"
                )

    def has_column(self, name: str) -> bool:
        return name.upper() in {c.name for c in self.columns}

    def column(self, name: str) -> ColumnDef:
        wanted = name.upper()
        for col in self.columns:
            if col.name == wanted:
                return col
        raise KeyError(f"no column {name!r} in table {self.name!r}")


@dataclass(frozen=True)
class SchemaCatalog:
    name: str
    tables: tuple[TableDef, ...]
    _by_name: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "tables", tuple(self.tables))
        if not self.tables:
            raise CatalogInvariantError("empty catalog: at least one table is required")
        by_name: dict[str, TableDef] = {}
        for table in self.tables:
            if table.name in by_name:
                raise CatalogInvariantError(f"duplicate table name {table.name!r}")
            by_name[table.name] = table
        for table in self.tables:
            for fk in table.foreign_keys:
                target = by_name.get(fk.ref_table)
                if target is None:
                    raise CatalogInvariantError(
                        f"dangling foreign key {table.name}.{fk.column}: "
                        f"table {fk.ref_table!r} does not exist"
                    )
                if not target.has_column(fk.ref_column):
                    raise CatalogInvariantError(
                        f"dangling foreign key {table.name}.{fk.column}: "
                        f"column {fk.ref_table}.{fk.ref_column} does not exist"
                    )
        object.__setattr__(self, "_by_name", by_name)

    def has_table(self, name: str) -> bool:
        return name.upper() in self._by_name

    def table(self, name: str) -> TableDef:
        wanted = name.upper()
        try:
            return self._by_name[wanted]
        except KeyError:
            raise UnknownTableError(f"unknown table {name!r}") from None

    @property
    def table_names(self) -> list[str]:
        return [t.name for t in self.tables]


@dataclass(frozen=True)
class NarrowResult:
    """Outcome of narrowing a catalog: the kept subset plus the FK edges cut."""

    catalog: SchemaCatalog
    dropped_foreign_keys: tuple[tuple[str, ForeignKey], ...]


def load_catalog(source: str, name: Optional[str] = None) -> SchemaCatalog:
    """Parse a schema definition document into a validated SchemaCatalog.

    The format is YAML with a top-level ``tables`` list; each table has
    ``name``, ``columns`` ({name, type, nullable, description?}),
    ``primary_key`` and ``foreign_keys`` ({column, ref_table, ref_column}).
    A top-level ``name`` labels the catalog.
    """
    try:
        doc = yaml.safe_load(source)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            raise SchemaParseError(str(getattr(exc, "problem", exc)),
                                   line=mark.line + 1, column=mark.column + 1) from exc
        raise SchemaParseError(str(exc)) from exc
    if not isinstance(doc, dict):
        raise SchemaParseError("schema document must be a mapping with a 'tables' list")
    raw_tables = doc.get("tables")
    if raw_tables is None:
        raise SchemaParseError("schema document is missing the 'tables' list")
    if not raw_tables:
        raise CatalogInvariantError("empty catalog: 'tables' list has no entries")

    tables = []
    for i, raw in enumerate(raw_tables):
        if not isinstance(raw, dict) or "name" not in raw:
            raise SchemaParseError(f"table entry #{i + 1} must be a mapping with a 'name'")
        columns = []
        for raw_col in raw.get("columns") or []:
            if not isinstance(raw_col, dict) or "name" not in raw_col:
                raise SchemaParseError(
                    f"column entry in table {raw['name']!r} must be a mapping with a 'name'"
                )
            columns.append(ColumnDef(
                name=str(raw_col["name"]),
                type_name=str(raw_col.get("type", "")),
                nullable=bool(raw_col.get("nullable", True)),
                description=raw_col.get("description"),
            ))
        if not columns:
            raise SchemaParseError(f"table {raw['name']!r} defines no columns")
        fks = []
        for raw_fk in raw.get("foreign_keys") or []:
            try:
                fks.append(ForeignKey(
                    column=str(raw_fk["column"]),
                    ref_table=str(raw_fk["ref_table"]),
                    ref_column=str(raw_fk["ref_column"]),
                ))
            except (KeyError, TypeError):
                raise SchemaParseError(
                    f"foreign key entry in table {raw['name']!r} needs "
                    "'column', 'ref_table' and 'ref_column'"
                ) from None
        tables.append(TableDef(
            name=str(raw["name"]),
            columns=tuple(columns),
            primary_key=tuple(str(c) for c in raw.get("primary_key") or []),
            foreign_keys=tuple(fks),
            description=raw.get("description"),
        ))

    catalog_name = name or doc.get("name") or "catalog"
    return SchemaCatalog(name=str(catalog_name), tables=tuple(tables))


def load_catalog_file(path: str | Path) -> SchemaCatalog:
    path = Path(path)
    return load_catalog(path.read_text(encoding="utf-8"), name=path.stem)


def dump_catalog(catalog: SchemaCatalog) -> str:
    """Serialize a catalog back to the schema file format (load round-trips)."""
    doc = {
        "name": catalog.name,
        "tables": [
            {
                "name": t.name,
                **({"description": t.description} if t.description else {}),
                "columns": [
                    {
                        "name": c.name,
                        "type": c.type_name,
                        "nullable": c.nullable,
                        **({"description": c.description} if c.description else {}),
                    }
                    for c in t.columns
                ],
                "primary_key": list(t.primary_key),
                "foreign_keys": [
                    {"column": fk.column, "ref_table": fk.ref_table, "ref_column": fk.ref_column}
                    for fk in t.foreign_keys
                ],
            }
            for t in catalog.tables
        ],
    }
    return yaml.safe_dump(doc, sort_keys=False, allow_unicode=True)


def narrow(catalog: SchemaCatalog, keep: list[str]) -> NarrowResult:
    """Restrict a catalog to the named tables.

    Foreign keys pointing at tables that were dropped are removed from the
    narrowed catalog and reported in the result instead of failing.
    """
    wanted = []
    seen = set()
    for raw in keep:
        name = raw.upper()
        if not catalog.has_table(name):
            raise UnknownTableError(f"unknown table {raw!r} in keep list")
        if name not in seen:
            seen.add(name)
            wanted.append(name)

    kept_set = set(wanted)
    dropped: list[tuple[str, ForeignKey]] = []
    tables = []
    for table in catalog.tables:
        if table.name not in kept_set:
            continue
        fks = []
        for fk in table.foreign_keys:
            if fk.ref_table in kept_set:
                fks.append(fk)
            else:
                dropped.append((table.name, fk))
        tables.append(TableDef(
            name=table.name,
            columns=table.columns,
            primary_key=table.primary_key,
            foreign_keys=tuple(fks),
            description=table.description,
        ))
    narrowed = SchemaCatalog(name=f"{catalog.name}:narrowed", tables=tuple(tables))
    return NarrowResult(catalog=narrowed, dropped_foreign_keys=tuple(dropped))


def render_schema_text(catalog: SchemaCatalog) -> str:
    """Render the catalog as deterministic plain text, one block per table.

    Tables are ordered by name, columns in definition order; the output is
    byte-stable for identical catalogs and is what gets chunked into the
    retrieval corpus.
    """
    blocks = []
    for table in sorted(catalog.tables, key=lambda t: t.name):
        lines = [f"TABLE {table.name}"]
        if table.description:
            lines.append(f"  Description: {table.description}")
        lines.append("  Columns:")
        for col in table.columns:
            parts = [f"    {col.name} {col.type_name}".rstrip()]
            parts.append("NOT NULL" if not col.nullable else "NULL")
            entry = " ".join(parts)
            if col.description:
                entry += f" -- {col.description}"
            lines.append(entry)
        if table.primary_key:
            lines.append(f"  Primary key: {', '.join(table.primary_key)}")
        for fk in table.foreign_keys:
            lines.append(
                f"  Foreign key: {fk.column} references {fk.ref_table}.{fk.ref_column}"
            )
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"
