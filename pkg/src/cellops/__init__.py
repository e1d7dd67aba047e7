"""Operations copilot for a simulated SDR base station.

An LLM-driven agent configures, starts, monitors and troubleshoots a
deterministic base-station digital twin through typed tool calls, grounded
by BM25 retrieval over operations manuals, with operator approval and
KPI-verified rollback guarding every configuration change.
"""

__version__ = "0.1.0"

from .cellcalc import (
    BandEntry,
    BandTable,
    CellConfig,
    ValidationReport,
    default_band_table,
    earfcn_to_freq,
    freq_to_earfcn,
    pci_conflicts,
    pci_decompose,
    prb_for_bandwidth,
    validate_config,
)
from .station import FaultKind, KpiSample, Lifecycle, Station, StationHost, classify_fault
from .knowledge import DocChunk, Index, bm25_score, build_index, chunk_document, retrieve
from .agent import AgentTurn, ToolCall, diff_configs, run_turn
from .providers import HttpProvider, ProviderResponse, ScriptedProvider
from .session import Session
from .config import Policy, ServiceConfig
