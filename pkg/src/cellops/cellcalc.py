"""Deterministic cellular configuration math and validation rules.

EARFCN/frequency mapping, PCI planning lint, PRB lookup and whole-config
validation. Both the agent's guardrails and the station simulator treat the
rules in this module as ground truth. All functions are pure; frequencies are
handled internally in integer tenths of MHz so the 0.1 MHz channel raster
stays exact.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, fields
from functools import lru_cache
from importlib import resources
from pathlib import Path

LEGAL_BANDWIDTHS_MHZ = (1.4, 3.0, 5.0, 10.0, 15.0, 20.0)
# floor(bw / 0.2) everywhere except the 1.4 MHz narrowband special case
PRB_PER_BANDWIDTH = {1.4: 6, 3.0: 15, 5.0: 25, 10.0: 50, 15.0: 75, 20.0: 100}

PCI_MAX = 503
TAC_MAX = 65535
CELL_IDENTITY_MAX = 2**28 - 1
TX_POWER_MIN_DBM = 0.0
TX_POWER_MAX_DBM = 46.0
HIGH_POWER_WARN_DBM = 40.0
RASTER_TOLERANCE_MHZ = 1e-6

_PLMN_RE = re.compile(r"^[0-9]{5,6}$")


class CellCalcError(ValueError):
    """Base class for configuration-math errors."""


class UnknownBandError(CellCalcError):
    def __init__(self, band):
        super().__init__(f"unknown band {band!r}")
        self.band = band


class EarfcnRangeError(CellCalcError):
    def __init__(self, band: int, earfcn: int, lo: int, hi: int):
        super().__init__(f"earfcn {earfcn} out of range [{lo}, {hi}] for band {band}")
        self.band, self.earfcn, self.lo, self.hi = band, earfcn, lo, hi


class OffRasterError(CellCalcError):
    def __init__(self, band: int, freq_mhz: float):
        super().__init__(f"{freq_mhz} MHz is not on the 0.1 MHz raster of band {band}")
        self.band, self.freq_mhz = band, freq_mhz


class PciRangeError(CellCalcError):
    def __init__(self, pci):
        super().__init__(f"pci {pci!r} out of range 0..{PCI_MAX}")
        self.pci = pci


class IllegalBandwidthError(CellCalcError):
    def __init__(self, bandwidth_mhz):
        super().__init__(
            f"bandwidth {bandwidth_mhz!r} MHz not in {sorted(LEGAL_BANDWIDTHS_MHZ)}"
        )
        self.bandwidth_mhz = bandwidth_mhz


@dataclass(frozen=True)
class BandEntry:
    """One downlink band plan row; frequencies in tenths of MHz."""

    band: int
    f_dl_low_tenths: int
    n_offs_dl: int
    n_dl_min: int
    n_dl_max: int

    @property
    def f_dl_low_mhz(self) -> float:
        return self.f_dl_low_tenths / 10.0


class BandTable:
    """Downlink band plan loaded once from a fixture file."""

    def __init__(self, entries: list[BandEntry]):
        self._by_band: dict[int, BandEntry] = {}
        for e in entries:
            if e.n_dl_min != e.n_offs_dl:
                raise ValueError(f"band {e.band}: n_dl_min must equal n_offs_dl")
            if e.n_dl_max <= e.n_dl_min:
                raise ValueError(f"band {e.band}: empty EARFCN range")
            if e.f_dl_low_tenths <= 0:
                raise ValueError(f"band {e.band}: non-positive carrier frequency")
            if e.band in self._by_band:
                raise ValueError(f"duplicate band {e.band}")
            self._by_band[e.band] = e

    @classmethod
    def load(cls, path: str | Path) -> "BandTable":
        entries = []
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            cols = line.split()
            if len(cols) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 columns, got {len(cols)}")
            entries.append(BandEntry(*(int(c) for c in cols)))
        return cls(entries)

    def get(self, band) -> BandEntry:
        try:
            entry = self._by_band[band]
        except (KeyError, TypeError):
            raise UnknownBandError(band) from None
        return entry

    def bands(self) -> list[int]:
        return sorted(self._by_band)

    def __contains__(self, band) -> bool:
        try:
            return band in self._by_band
        except TypeError:
            return False


_active_table: BandTable | None = None


@lru_cache(maxsize=1)
def _packaged_band_table() -> BandTable:
    with resources.as_file(resources.files("cellops.data") / "lte_bands.txt") as p:
        return BandTable.load(p)


def set_default_band_table(source: "BandTable | str | Path | None") -> None:
    """Install a process-wide band table from a fixture path or instance;
    None restores the packaged fixture. Called once at service startup."""
    global _active_table
    if source is None or isinstance(source, BandTable):
        _active_table = source
    else:
        _active_table = BandTable.load(source)


def default_band_table() -> BandTable:
    return _active_table if _active_table is not None else _packaged_band_table()


def earfcn_to_freq(band: int, earfcn: int, table: BandTable | None = None) -> float:
    """Downlink carrier frequency in MHz for an EARFCN within its band."""
    entry = (table or default_band_table()).get(band)
    if not entry.n_dl_min <= earfcn <= entry.n_dl_max:
        raise EarfcnRangeError(band, earfcn, entry.n_dl_min, entry.n_dl_max)
    return (entry.f_dl_low_tenths + (earfcn - entry.n_offs_dl)) / 10.0


def freq_to_earfcn(band: int, freq_mhz: float, table: BandTable | None = None) -> int:
    """Exact inverse of earfcn_to_freq; the frequency must sit on the raster."""
    entry = (table or default_band_table()).get(band)
    delta_mhz = freq_mhz - entry.f_dl_low_mhz
    steps = round(delta_mhz * 10.0)
    if abs(delta_mhz - steps * 0.1) > RASTER_TOLERANCE_MHZ:
        raise OffRasterError(band, freq_mhz)
    earfcn = entry.n_offs_dl + steps
    if not entry.n_dl_min <= earfcn <= entry.n_dl_max:
        raise EarfcnRangeError(band, earfcn, entry.n_dl_min, entry.n_dl_max)
    return earfcn


def pci_decompose(pci: int) -> tuple[int, int]:
    """Split a PCI into (group_id 0..167, sector_id 0..2); pci == 3*group + sector."""
    if not isinstance(pci, int) or not 0 <= pci <= PCI_MAX:
        raise PciRangeError(pci)
    return pci // 3, pci % 3


@dataclass(frozen=True)
class PciConflict:
    neighbor: int
    kind: str  # "collision" or "mod3"


def pci_conflicts(pci: int, neighbors: list[int]) -> list[PciConflict]:
    """Lint a PCI against its neighbor list.

    Reports a collision for equal PCIs and a mod3 clash for distinct PCIs in
    the same mod-3 sector group; clean neighbors are omitted. Output order
    follows input order.
    """
    if not isinstance(pci, int) or not 0 <= pci <= PCI_MAX:
        raise PciRangeError(pci)
    out = []
    for n in neighbors:
        if not isinstance(n, int) or not 0 <= n <= PCI_MAX:
            raise PciRangeError(n)
        if n == pci:
            out.append(PciConflict(n, "collision"))
        elif n % 3 == pci % 3:
            out.append(PciConflict(n, "mod3"))
    return out


def prb_for_bandwidth(bandwidth_mhz) -> int:
    """PRB count for a legal channel bandwidth."""
    try:
        return PRB_PER_BANDWIDTH[float(bandwidth_mhz)]
    except (KeyError, TypeError, ValueError):
        raise IllegalBandwidthError(bandwidth_mhz) from None


@dataclass
class CellConfig:
    """Complete declarative configuration of one cell.

    Construction never validates; run validate_config to get a report. This
    keeps arbitrary operator input representable.
    """

    band: int = None
    earfcn_dl: int = None
    bandwidth_mhz: float = None
    pci: int = None
    tx_power_dbm: float = None
    plmn: str = None
    tac: int = None
    cell_identity: int = None
    neighbor_pcis: list[int] = field(default_factory=list)

    @classmethod
    def from_dict(cls, d: dict) -> "CellConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def canonical_json(self) -> str:
        """Stable byte representation used for config identity checks."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


@dataclass
class Issue:
    severity: str  # "error" or "warning"
    field: str
    message: str
    suggested_fix: str | None = None


@dataclass
class ValidationReport:
    valid: bool
    issues: list[Issue]

    @classmethod
    def from_issues(cls, issues: list[Issue]) -> "ValidationReport":
        return cls(valid=not any(i.severity == "error" for i in issues), issues=issues)

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "issues": [
                {
                    "severity": i.severity,
                    "field": i.field,
                    "message": i.message,
                    "suggested_fix": i.suggested_fix,
                }
                for i in self.issues
            ],
        }


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def suggest_pci(neighbors: list[int]) -> int | None:
    """Smallest PCI with no collision and no mod-3 clash against neighbors.

    Falls back to the smallest collision-free PCI when every mod-3 group is
    occupied; None when all 504 values collide.
    """
    usable = [n for n in neighbors if _is_int(n) and 0 <= n <= PCI_MAX]
    for pci in range(PCI_MAX + 1):
        if not pci_conflicts(pci, usable):
            return pci
    for pci in range(PCI_MAX + 1):
        if pci not in usable:
            return pci
    return None


def validate_config(config: CellConfig, table: BandTable | None = None) -> ValidationReport:
    """Check every configuration rule and report all violations.

    Never raises: malformed field values become error issues. Severity
    policy is fixed: PCI collision is an error, mod-3 clash and tx power
    above 40 dBm are warnings.
    """
    table = table or default_band_table()
    issues: list[Issue] = []

    def err(field_name, message, fix=None):
        issues.append(Issue("error", field_name, message, fix))

    def warn(field_name, message, fix=None):
        issues.append(Issue("warning", field_name, message, fix))

    band_entry = None
    if not _is_int(config.band):
        err("band", f"band must be an integer, got {config.band!r}")
    elif config.band not in table:
        err("band", f"unknown band {config.band}; known bands: {table.bands()}")
    else:
        band_entry = table.get(config.band)

    if not _is_int(config.earfcn_dl):
        err("earfcn_dl", f"earfcn_dl must be an integer, got {config.earfcn_dl!r}")
    elif band_entry is not None and not (
        band_entry.n_dl_min <= config.earfcn_dl <= band_entry.n_dl_max
    ):
        clamped = min(max(config.earfcn_dl, band_entry.n_dl_min), band_entry.n_dl_max)
        err(
            "earfcn_dl",
            f"earfcn {config.earfcn_dl} outside band {config.band} range "
            f"[{band_entry.n_dl_min}, {band_entry.n_dl_max}]",
            fix=str(clamped),
        )

    if not _is_number(config.bandwidth_mhz) or float(config.bandwidth_mhz) not in PRB_PER_BANDWIDTH:
        err(
            "bandwidth_mhz",
            f"bandwidth {config.bandwidth_mhz!r} not one of {sorted(LEGAL_BANDWIDTHS_MHZ)}",
        )

    pci_ok = _is_int(config.pci) and 0 <= config.pci <= PCI_MAX
    if not pci_ok:
        err("pci", f"pci {config.pci!r} out of range 0..{PCI_MAX}")

    if not _is_number(config.tx_power_dbm):
        err("tx_power_dbm", f"tx_power_dbm must be a number, got {config.tx_power_dbm!r}")
    elif not TX_POWER_MIN_DBM <= config.tx_power_dbm <= TX_POWER_MAX_DBM:
        err(
            "tx_power_dbm",
            f"tx_power {config.tx_power_dbm} dBm outside "
            f"[{TX_POWER_MIN_DBM:g}, {TX_POWER_MAX_DBM:g}]",
        )
    elif config.tx_power_dbm > HIGH_POWER_WARN_DBM:
        warn("tx_power_dbm", f"high power: {config.tx_power_dbm} dBm exceeds {HIGH_POWER_WARN_DBM:g} dBm")

    if not isinstance(config.plmn, str) or not _PLMN_RE.match(config.plmn):
        err("plmn", f"plmn {config.plmn!r} must be 5 or 6 decimal digits (MCC then MNC)")

    if not _is_int(config.tac) or not 0 <= config.tac <= TAC_MAX:
        err("tac", f"tac {config.tac!r} out of range 0..{TAC_MAX}")

    if not _is_int(config.cell_identity) or not 0 <= config.cell_identity <= CELL_IDENTITY_MAX:
        err("cell_identity", f"cell_identity {config.cell_identity!r} out of range 0..{CELL_IDENTITY_MAX}")

    neighbors_ok = isinstance(config.neighbor_pcis, list) and all(
        _is_int(n) and 0 <= n <= PCI_MAX for n in config.neighbor_pcis
    )
    if not neighbors_ok:
        err("neighbor_pcis", f"neighbor_pcis {config.neighbor_pcis!r} must be a list of PCIs 0..{PCI_MAX}")

    if pci_ok and neighbors_ok:
        for conflict in pci_conflicts(config.pci, config.neighbor_pcis):
            if conflict.kind == "collision":
                fix = suggest_pci(config.neighbor_pcis)
                err(
                    "pci",
                    f"pci {config.pci} collides with neighbor {conflict.neighbor}",
                    fix=None if fix is None else str(fix),
                )
            else:
                warn(
                    "pci",
                    f"pci {config.pci} shares mod-3 group with neighbor {conflict.neighbor}",
                )

    return ValidationReport.from_issues(issues)
