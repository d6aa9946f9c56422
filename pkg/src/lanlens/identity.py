"""Device identity: label standardization, validation, and the
general-purpose-device gate.

User-entered labels are messy ("TV" vs "smart TV" vs "television"), so every
triple is reduced to one of twelve standard categories and a canonical vendor
using an editable rules file. Six independent evidence sources then try to
confirm the standardized labels; OUI and contacted-domain evidence speak only
to the vendor, never the category.
"""

from __future__ import annotations

import importlib.resources
import re
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Mapping, Optional

import yaml

CATEGORIES = ("appliance", "tv", "voice", "camera", "hub", "plug",
              "office", "storage", "game", "car", "computer", "other")
METHODS = ("fingerbank", "netdisco", "dhcp-hostname", "http-ua", "oui", "domains")
OUTCOMES = ("validated", "not-validated", "no-data")
VENDOR_ONLY_METHODS = frozenset({"oui", "domains"})
FINGERBANK_DOMAIN_LIMIT = 5

_NETDISCO_KINDS = frozenset({"ssdp", "mdns", "upnp"})


class UnknownDeviceError(ValueError):
    """The entered MAC address does not belong to any observed device."""


@dataclass(frozen=True)
class LabelTriple:
    device_id: str
    raw_name: str = ""
    raw_category: str = ""
    raw_vendor: str = ""
    std_category: Optional[str] = None
    std_vendor: Optional[str] = None

    def __post_init__(self):
        if self.std_category is not None and self.std_category not in CATEGORIES:
            raise ValueError(f"std_category {self.std_category!r}")

    @property
    def standardized(self) -> bool:
        return self.std_category is not None and self.std_vendor is not None


@dataclass(frozen=True)
class ValidationOutcome:
    device_id: str
    method: str
    target: str  # "category" | "vendor"
    outcome: str

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method {self.method!r}")
        if self.target not in ("category", "vendor"):
            raise ValueError(f"target {self.target!r}")
        if self.outcome not in OUTCOMES:
            raise ValueError(f"outcome {self.outcome!r}")
        if self.method in VENDOR_ONLY_METHODS and self.target != "vendor":
            raise ValueError(f"{self.method} evidence applies to vendor only")


@dataclass(frozen=True)
class LabelRules:
    category_patterns: tuple[tuple[str, tuple[str, ...]], ...]
    vendor_aliases: Mapping[str, str]
    vendor_domains: Mapping[str, str]
    general_purpose_keywords: tuple[str, ...]


def _normalize_text(text: str) -> str:
    return re.sub(r"\s+", " ", re.sub(r"[_\-/.]+", " ", text.lower())).strip()


def _word_match(pattern: str, text: str) -> bool:
    return re.search(rf"\b{re.escape(pattern)}\b", text) is not None


def load_label_rules(path: Optional[str] = None) -> LabelRules:
    if path is None:
        raw = importlib.resources.files("lanlens.data").joinpath("label_rules.yaml").read_text()
    else:
        with open(path) as fh:
            raw = fh.read()
    doc = yaml.safe_load(raw)

    categories = []
    for category, patterns in doc.get("categories", {}).items():
        if category not in CATEGORIES:
            raise ValueError(f"unknown category {category!r} in rules file")
        normalized = [_normalize_text(p) for p in (patterns or [])]
        if category not in normalized:
            normalized.append(category)  # keeps standardize a fixpoint
        categories.append((category, tuple(normalized)))

    aliases = {}
    for alias, canonical in doc.get("vendor_aliases", {}).items():
        aliases[_normalize_text(str(alias))] = str(canonical)
    for canonical in list(aliases.values()):
        aliases.setdefault(_normalize_text(canonical), canonical)

    domains = {str(d).lower(): str(v) for d, v in doc.get("vendor_domains", {}).items()}
    keywords = tuple(_normalize_text(k) for k in doc.get("general_purpose_keywords", []))
    return LabelRules(tuple(categories), aliases, domains, keywords)


def standardize_category(raw_category: str, rules: LabelRules) -> str:
    """Longest matching pattern wins; category order breaks ties; else other."""
    text = _normalize_text(raw_category)
    best: tuple[int, int, str] = (0, 0, "other")
    if not text:
        return "other"
    for position, (category, patterns) in enumerate(rules.category_patterns):
        for pattern in patterns:
            if pattern and _word_match(pattern, text):
                candidate = (len(pattern), -position, category)
                if candidate[:2] > best[:2]:
                    best = candidate
    return best[2]


def canonical_vendor(raw_vendor: str, rules: LabelRules) -> str:
    text = _normalize_text(raw_vendor)
    if not text:
        return ""
    exact = rules.vendor_aliases.get(text)
    if exact is not None:
        return exact
    hits = [(len(alias), canonical)
            for alias, canonical in rules.vendor_aliases.items()
            if _word_match(alias, text)]
    if hits:
        hits.sort(key=lambda pair: (-pair[0], pair[1]))
        return hits[0][1]
    return raw_vendor.strip()


def standardize(triple: LabelTriple, rules: LabelRules) -> LabelTriple:
    return replace(
        triple,
        std_category=standardize_category(triple.raw_category, rules),
        std_vendor=canonical_vendor(triple.raw_vendor, rules),
    )


# ----------------------------------------------------------------- evidence

@dataclass(frozen=True)
class EvidenceBundle:
    """Everything validation may look at for one device."""
    device_id: str
    hints: tuple = ()
    oui_vendor: Optional[str] = None
    domains: tuple[str, ...] = ()
    fingerbank_name: Optional[str] = None

    def __post_init__(self):
        if len(self.domains) > FINGERBANK_DOMAIN_LIMIT:
            raise ValueError(f"domain sample capped at {FINGERBANK_DOMAIN_LIMIT}")

    def texts(self, kinds: frozenset[str]) -> list[str]:
        return [h.value for h in self.hints if h.kind in kinds]


class OuiDatabase:
    def __init__(self, prefixes: Mapping[str, str]):
        self._prefixes = {k.lower(): v for k, v in prefixes.items()}

    @staticmethod
    def oui_of(mac: str) -> str:
        digits = re.sub(r"[^0-9a-fA-F]", "", mac).lower()
        if len(digits) != 12:
            raise ValueError(f"not a MAC address: {mac!r}")
        return digits[:6]

    def lookup(self, mac: str) -> Optional[str]:
        return self._prefixes.get(self.oui_of(mac))


def load_oui_database(path: Optional[str] = None) -> OuiDatabase:
    if path is None:
        raw = importlib.resources.files("lanlens.data").joinpath("oui_prefixes.csv").read_text()
    else:
        with open(path) as fh:
            raw = fh.read()
    prefixes = {}
    for line in raw.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        prefix, _, name = line.partition(",")
        prefixes[re.sub(r"[^0-9a-fA-F]", "", prefix).lower()] = name.strip()
    return OuiDatabase(prefixes)


class FixtureFingerbank:
    """Offline stand-in for the proprietary fingerprint API.

    Rows are (oui, optional required domain, device name); the first row whose
    OUI matches, and whose domain (if any) was contacted, wins.
    """

    def __init__(self, path: Optional[str] = None):
        if path is None:
            raw = importlib.resources.files("lanlens.data").joinpath(
                "fingerbank_fixture.csv").read_text()
        else:
            with open(path) as fh:
                raw = fh.read()
        self._rows = []
        for line in raw.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            oui, domain, name = (part.strip() for part in line.split(",", 2))
            self._rows.append((re.sub(r"[^0-9a-fA-F]", "", oui).lower(),
                               domain.lower(), name))

    def __call__(self, oui: str, user_agent: Optional[str],
                 domains: tuple[str, ...]) -> Optional[str]:
        oui = re.sub(r"[^0-9a-fA-F]", "", oui).lower()
        lowered = {d.lower() for d in domains}
        for row_oui, row_domain, name in self._rows:
            if row_oui == oui and (not row_domain or row_domain in lowered):
                return name
        return None


def build_evidence(device_id: str, mac: str, hints: Iterable,
                   contacted_domains: Iterable[str], *, oui_db: OuiDatabase,
                   fingerbank: Optional[Callable] = None) -> EvidenceBundle:
    hints = tuple(hints)
    seen = []
    for domain in contacted_domains:
        if domain not in seen:
            seen.append(domain)
        if len(seen) == FINGERBANK_DOMAIN_LIMIT:
            break
    domains = tuple(seen)
    user_agent = next((h.value for h in hints if h.kind == "http-user-agent"), None)
    name = None
    if fingerbank is not None:
        name = fingerbank(OuiDatabase.oui_of(mac), user_agent, domains)
    return EvidenceBundle(device_id=device_id, hints=hints,
                          oui_vendor=oui_db.lookup(mac), domains=domains,
                          fingerbank_name=name)


# --------------------------------------------------------------- validation

def _matches_category(text: str, category: str, rules: LabelRules) -> bool:
    normalized = _normalize_text(text)
    for cat, patterns in rules.category_patterns:
        if cat == category:
            return any(p and _word_match(p, normalized) for p in patterns)
    return False


def _matches_vendor(text: str, vendor: str, rules: LabelRules) -> bool:
    if not vendor:
        return False
    normalized = _normalize_text(text)
    if _word_match(_normalize_text(vendor), normalized):
        return True
    return any(_word_match(alias, normalized)
               for alias, canonical in rules.vendor_aliases.items()
               if canonical == vendor)


def validate(evidence: EvidenceBundle, triple: LabelTriple,
             rules: LabelRules) -> list[ValidationOutcome]:
    """One outcome per method and applicable target, ten in total."""
    if not triple.standardized:
        raise ValueError("validate() needs a standardized triple")

    text_sources = [
        ("fingerbank", [evidence.fingerbank_name] if evidence.fingerbank_name else []),
        ("netdisco", evidence.texts(_NETDISCO_KINDS)),
        ("dhcp-hostname", evidence.texts(frozenset({"dhcp-hostname"}))),
        ("http-ua", evidence.texts(frozenset({"http-user-agent"}))),
    ]
    outcomes = []

    def emit(method, target, ok: Optional[bool]):
        outcome = "no-data" if ok is None else ("validated" if ok else "not-validated")
        outcomes.append(ValidationOutcome(evidence.device_id, method, target, outcome))

    for method, texts in text_sources:
        if not texts:
            emit(method, "category", None)
            emit(method, "vendor", None)
            continue
        emit(method, "category",
             any(_matches_category(t, triple.std_category, rules) for t in texts))
        emit(method, "vendor",
             any(_matches_vendor(t, triple.std_vendor, rules) for t in texts))

    if evidence.oui_vendor is None:
        emit("oui", "vendor", None)
    else:
        emit("oui", "vendor", _matches_vendor(evidence.oui_vendor, triple.std_vendor, rules))

    if not evidence.domains:
        emit("domains", "vendor", None)
    else:
        known = any(rules.vendor_domains.get(d.lower()) == triple.std_vendor
                    for d in evidence.domains)
        textual = any(_matches_vendor(d, triple.std_vendor, rules)
                      for d in evidence.domains)
        emit("domains", "vendor", known or textual)
    return outcomes


# ----------------------------------------------- general-purpose inference

@dataclass(frozen=True)
class GeneralPurposeFinding:
    verdict: str  # "smart-home" | "general-purpose" | "unknown"
    matches: tuple[tuple[str, str, str], ...]  # (source, keyword, evidence text)

    def __post_init__(self):
        if self.verdict not in ("smart-home", "general-purpose", "unknown"):
            raise ValueError(f"verdict {self.verdict!r}")
        if self.verdict == "general-purpose" and not self.matches:
            raise ValueError("general-purpose verdict needs matching evidence")


def infer_general_purpose(evidence: EvidenceBundle,
                          rules: LabelRules) -> GeneralPurposeFinding:
    sources = [("http-ua", text) for text in evidence.texts(frozenset({"http-user-agent"}))]
    if evidence.fingerbank_name:
        sources.append(("fingerbank", evidence.fingerbank_name))
    if not sources:
        return GeneralPurposeFinding("unknown", ())

    matches = []
    for source, text in sources:
        normalized = _normalize_text(text)
        for keyword in rules.general_purpose_keywords:
            if keyword and keyword in normalized:
                matches.append((source, keyword, text))
    if matches:
        return GeneralPurposeFinding("general-purpose", tuple(matches))
    return GeneralPurposeFinding("smart-home", ())


class OverrideRegistry:
    """User assertions that a device wrongly gated as general-purpose is in
    fact a smart-home device. Entering the device's exact MAC is the proof of
    physical access; every accepted override is kept for audit."""

    def __init__(self):
        self._overridden: set[str] = set()
        self.audit_log: list[tuple[str, float]] = []

    @staticmethod
    def _normalize(mac: str) -> str:
        digits = re.sub(r"[^0-9a-fA-F]", "", mac).lower()
        if len(digits) != 12:
            raise UnknownDeviceError(f"not a MAC address: {mac!r}")
        return ":".join(digits[i:i + 2] for i in range(0, 12, 2))

    def override(self, entered_mac: str, observed_macs: Iterable[str],
                 *, timestamp: float = 0.0) -> bool:
        mac = self._normalize(entered_mac)
        observed = {self._normalize(m) for m in observed_macs}
        if mac not in observed:
            raise UnknownDeviceError(f"{mac} was never observed on this network")
        if mac in self._overridden:
            return False
        self._overridden.add(mac)
        self.audit_log.append((mac, timestamp))
        return True

    def is_overridden(self, mac: str) -> bool:
        return self._normalize(mac) in self._overridden
