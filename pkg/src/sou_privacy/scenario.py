"""Scenario of Use threat models: data model, JSON format, validation and run ledgers.

A scenario pairs an attacker model with a protector model.  Both carry an
objective, an opportunity and a list of additional resources.  Resources are
declared explicitly so that a run ledger (which party touched which resource
in which phase) can be checked mechanically against the scenario.

The file format is UTF-8 JSON.  :func:`serialize_scenario` emits it in
canonical form: fixed key order, two-space indentation, trailing newline.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable

__all__ = [
    "EMPTY_MARKER",
    "RESOURCE_KINDS",
    "PARTIES",
    "PHASES",
    "ScenarioParseError",
    "ResourceDecl",
    "AttackerModel",
    "ProtectorModel",
    "ScenarioOfUse",
    "LedgerEntry",
    "RunLedger",
    "Finding",
    "ValidationReport",
    "parse_scenario",
    "serialize_scenario",
    "load_scenario",
    "validate_scenario",
    "check_ledger",
]

# A text cell holding only this marker is stated as empty, not omitted.
EMPTY_MARKER = "—"

RESOURCE_KINDS = ("data", "model", "compute", "knowledge")
PARTIES = ("attacker", "protector")
PHASES = ("train", "attack", "protect", "evaluate")

_TOP_KEYS = ("id", "attacker", "protector", "notes")
_ATTACKER_KEYS = ("objective", "opportunity", "opportunity_grants", "resources")
_PROTECTOR_KEYS = (
    "defense_objectives",
    "utility_objectives",
    "opportunity",
    "opportunity_grants",
    "resources",
)
_RESOURCE_KEYS = ("resource_id", "kind", "description", "declared_empty")


class ScenarioParseError(ValueError):
    """Raised for documents that are not valid scenario files."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


@dataclass(frozen=True)
class ResourceDecl:
    resource_id: str
    kind: str
    description: str = ""
    declared_empty: bool = False


@dataclass(frozen=True)
class AttackerModel:
    objective: str
    opportunity: str
    resources: tuple[ResourceDecl, ...] = ()
    opportunity_grants: tuple[ResourceDecl, ...] = ()


@dataclass(frozen=True)
class ProtectorModel:
    defense_objectives: tuple[str, ...]
    utility_objectives: tuple[str, ...]
    opportunity: str
    resources: tuple[ResourceDecl, ...] = ()
    opportunity_grants: tuple[ResourceDecl, ...] = ()


@dataclass(frozen=True)
class ScenarioOfUse:
    id: str
    attacker: AttackerModel
    protector: ProtectorModel
    notes: str | None = None

    def party(self, name: str) -> AttackerModel | ProtectorModel:
        if name == "attacker":
            return self.attacker
        if name == "protector":
            return self.protector
        raise ValueError(f"unknown party {name!r}")


# --------------------------------------------------------------------------- #
# parsing


def _expect(obj: Any, typ: type, where: str) -> Any:
    if not isinstance(obj, typ):
        raise ScenarioParseError(f"{where}: expected {typ.__name__}, got {type(obj).__name__}")
    return obj


def _check_keys(obj: dict, allowed: tuple[str, ...], where: str) -> None:
    unknown = [k for k in obj if k not in allowed]
    if unknown:
        raise ScenarioParseError(f"{where}: unknown key {unknown[0]!r}")


def _text(obj: dict, key: str, where: str) -> str:
    value = obj.get(key, "")
    return _expect(value, str, f"{where}.{key}")


def _text_list(obj: dict, key: str, where: str) -> tuple[str, ...]:
    values = _expect(obj.get(key, []), list, f"{where}.{key}")
    return tuple(_expect(v, str, f"{where}.{key}[{i}]") for i, v in enumerate(values))


def _resources(obj: dict, key: str, where: str) -> tuple[ResourceDecl, ...]:
    entries = _expect(obj.get(key, []), list, f"{where}.{key}")
    out = []
    for i, entry in enumerate(entries):
        loc = f"{where}.{key}[{i}]"
        _expect(entry, dict, loc)
        _check_keys(entry, _RESOURCE_KEYS, loc)
        if "resource_id" not in entry:
            raise ScenarioParseError(f"{loc}: missing resource_id")
        out.append(
            ResourceDecl(
                resource_id=_expect(entry["resource_id"], str, f"{loc}.resource_id"),
                kind=_expect(entry.get("kind", ""), str, f"{loc}.kind"),
                description=_expect(entry.get("description", ""), str, f"{loc}.description"),
                declared_empty=_expect(entry.get("declared_empty", False), bool, f"{loc}.declared_empty"),
            )
        )
    return tuple(out)


def parse_scenario(document: str) -> ScenarioOfUse:
    """Parse a scenario file.

    Missing dimension keys parse as empty and are reported by
    :func:`validate_scenario`; unknown keys and type errors raise
    :class:`ScenarioParseError`.
    """
    if not document.strip():
        raise ScenarioParseError("empty document", 1, 1)
    try:
        raw = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(exc.msg, exc.lineno, exc.colno) from None
    _expect(raw, dict, "document")
    _check_keys(raw, _TOP_KEYS, "document")
    if "id" not in raw:
        raise ScenarioParseError("document: missing id")

    attacker = _expect(raw.get("attacker", {}), dict, "attacker")
    _check_keys(attacker, _ATTACKER_KEYS, "attacker")
    protector = _expect(raw.get("protector", {}), dict, "protector")
    _check_keys(protector, _PROTECTOR_KEYS, "protector")
    notes = raw.get("notes")
    if notes is not None:
        _expect(notes, str, "notes")

    return ScenarioOfUse(
        id=_expect(raw["id"], str, "id"),
        attacker=AttackerModel(
            objective=_text(attacker, "objective", "attacker"),
            opportunity=_text(attacker, "opportunity", "attacker"),
            resources=_resources(attacker, "resources", "attacker"),
            opportunity_grants=_resources(attacker, "opportunity_grants", "attacker"),
        ),
        protector=ProtectorModel(
            defense_objectives=_text_list(protector, "defense_objectives", "protector"),
            utility_objectives=_text_list(protector, "utility_objectives", "protector"),
            opportunity=_text(protector, "opportunity", "protector"),
            resources=_resources(protector, "resources", "protector"),
            opportunity_grants=_resources(protector, "opportunity_grants", "protector"),
        ),
        notes=notes,
    )


def load_scenario(path) -> ScenarioOfUse:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


# --------------------------------------------------------------------------- #
# serialization


def _resource_dict(r: ResourceDecl) -> dict:
    return {
        "resource_id": r.resource_id,
        "kind": r.kind,
        "description": r.description,
        "declared_empty": r.declared_empty,
    }


def scenario_to_dict(s: ScenarioOfUse) -> dict:
    return {
        "id": s.id,
        "attacker": {
            "objective": s.attacker.objective,
            "opportunity": s.attacker.opportunity,
            "opportunity_grants": [_resource_dict(r) for r in s.attacker.opportunity_grants],
            "resources": [_resource_dict(r) for r in s.attacker.resources],
        },
        "protector": {
            "defense_objectives": list(s.protector.defense_objectives),
            "utility_objectives": list(s.protector.utility_objectives),
            "opportunity": s.protector.opportunity,
            "opportunity_grants": [_resource_dict(r) for r in s.protector.opportunity_grants],
            "resources": [_resource_dict(r) for r in s.protector.resources],
        },
        "notes": s.notes,
    }


def serialize_scenario(s: ScenarioOfUse) -> str:
    """Canonical text: fixed key order, 2-space indent, newline-terminated."""
    return json.dumps(scenario_to_dict(s), indent=2, ensure_ascii=False) + "\n"


# --------------------------------------------------------------------------- #
# validation


@dataclass(frozen=True)
class Finding:
    severity: str  # "error" | "warning"
    dimension: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...] = ()

    @property
    def complete(self) -> bool:
        return not self.errors

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == "error"]

    @property
    def warnings(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == "warning"]

    def to_dict(self) -> dict:
        return {
            "complete": self.complete,
            "findings": [
                {"severity": f.severity, "dimension": f.dimension, "message": f.message}
                for f in self.findings
            ],
        }


def _check_text_cell(value: str, dim: str, findings: list[Finding], allow_empty_marker: bool) -> None:
    stripped = value.strip()
    if not stripped:
        findings.append(Finding("error", dim, "dimension not stated"))
    elif stripped == EMPTY_MARKER:
        if allow_empty_marker:
            findings.append(Finding("warning", dim, "dimension declared empty"))
        else:
            findings.append(Finding("error", dim, "dimension may not be declared empty"))


def _check_resource_cell(resources: tuple[ResourceDecl, ...], dim: str, findings: list[Finding]) -> None:
    if not resources:
        findings.append(Finding("error", dim, "resources not stated (use a declared_empty entry for none)"))
        return
    empties = [r for r in resources if r.declared_empty]
    if empties and len(empties) != len(resources):
        findings.append(Finding("error", dim, "declared_empty entry mixed with real resources"))
    elif empties:
        findings.append(Finding("warning", dim, "resources declared empty"))
    _check_decls(resources, dim, findings)


def _check_decls(resources: Iterable[ResourceDecl], dim: str, findings: list[Finding]) -> None:
    for r in resources:
        if not r.resource_id.strip():
            findings.append(Finding("error", dim, "resource with empty resource_id"))
        if r.kind not in RESOURCE_KINDS:
            findings.append(Finding("error", dim, f"resource {r.resource_id!r}: kind {r.kind!r} not in {RESOURCE_KINDS}"))
        if r.declared_empty and r.description:
            findings.append(Finding("error", dim, f"resource {r.resource_id!r}: declared_empty with a description"))


def validate_scenario(s: ScenarioOfUse) -> ValidationReport:
    findings: list[Finding] = []
    if not s.id.strip():
        findings.append(Finding("error", "id", "scenario id is empty"))

    a, p = s.attacker, s.protector
    _check_text_cell(a.objective, "attacker.objective", findings, allow_empty_marker=False)
    _check_text_cell(a.opportunity, "attacker.opportunity", findings, allow_empty_marker=True)
    _check_resource_cell(a.resources, "attacker.resources", findings)
    _check_decls(a.opportunity_grants, "attacker.opportunity", findings)

    defense = [o.strip() for o in p.defense_objectives]
    utility = [o.strip() for o in p.utility_objectives]
    if not any(defense):
        findings.append(Finding("error", "protector.objective", "no defense objective"))
    if not any(utility):
        findings.append(Finding("error", "protector.objective", "no utility objective"))
    if any(not o for o in defense + utility):
        findings.append(Finding("error", "protector.objective", "empty objective string"))
    for o in sorted(set(defense) & set(utility) - {""}):
        findings.append(Finding("error", "protector.objective", f"objective is both defense and utility: {o!r}"))
    _check_text_cell(p.opportunity, "protector.opportunity", findings, allow_empty_marker=True)
    _check_resource_cell(p.resources, "protector.resources", findings)
    _check_decls(p.opportunity_grants, "protector.opportunity", findings)

    # ids are unique per party; the same id under both parties denotes one shared resource
    kinds: dict[str, str] = {}
    for party in PARTIES:
        model = s.party(party)
        seen: set[str] = set()
        for r in model.opportunity_grants + model.resources:
            if r.resource_id in seen:
                findings.append(Finding("error", f"{party}.resources", f"duplicate resource_id {r.resource_id!r}"))
            seen.add(r.resource_id)
            if r.resource_id in kinds and kinds[r.resource_id] != r.kind:
                findings.append(
                    Finding("error", f"{party}.resources", f"shared resource {r.resource_id!r} declared with conflicting kinds")
                )
            kinds.setdefault(r.resource_id, r.kind)
    return ValidationReport(tuple(findings))


# --------------------------------------------------------------------------- #
# run ledger


@dataclass(frozen=True)
class LedgerEntry:
    party: str
    resource_id: str
    phase: str

    def __post_init__(self) -> None:
        if self.party not in PARTIES:
            raise ValueError(f"party must be one of {PARTIES}, got {self.party!r}")
        if self.phase not in PHASES:
            raise ValueError(f"phase must be one of {PHASES}, got {self.phase!r}")


@dataclass
class RunLedger:
    entries: list[LedgerEntry] = field(default_factory=list)

    def record(self, party: str, resource_id: str, phase: str) -> LedgerEntry:
        entry = LedgerEntry(party, resource_id, phase)
        self.entries.append(entry)
        return entry

    def to_json(self) -> str:
        rows = [{"party": e.party, "resource_id": e.resource_id, "phase": e.phase} for e in self.entries]
        return json.dumps({"entries": rows}, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunLedger":
        raw = json.loads(text)
        return cls([LedgerEntry(e["party"], e["resource_id"], e["phase"]) for e in raw["entries"]])


def check_ledger(s: ScenarioOfUse, ledger: RunLedger) -> ValidationReport:
    """One error finding per ledger entry that the scenario does not grant."""
    granted: dict[str, set[str]] = {}
    empty: dict[str, set[str]] = {}
    for party in PARTIES:
        model = s.party(party)
        decls = model.opportunity_grants + model.resources
        granted[party] = {r.resource_id for r in decls if not r.declared_empty}
        empty[party] = {r.resource_id for r in decls if r.declared_empty}
    known = set().union(*granted.values(), *empty.values())

    findings = []
    for i, e in enumerate(ledger.entries):
        dim = f"ledger[{i}]"
        if e.resource_id in empty[e.party]:
            findings.append(
                Finding("error", dim, f"{e.party} uses {e.resource_id!r} in {e.phase}, but the scenario declares it empty")
            )
        elif e.resource_id not in known:
            findings.append(Finding("error", dim, f"unknown resource_id {e.resource_id!r} ({e.party}, {e.phase})"))
        elif e.resource_id not in granted[e.party]:
            findings.append(
                Finding("error", dim, f"{e.party} uses {e.resource_id!r} in {e.phase}, but it is not granted to the {e.party}")
            )
    return ValidationReport(tuple(findings))
