import pytest

from cellops.audit import AuditLog
from cellops.config import Policy
from cellops.knowledge import default_knowledge_dir, ingest_directory
from cellops.providers import ProviderResponse, ScriptedProvider
from cellops.session import Session
from cellops.station import StationHost

# valid band-3 reference cell used across the suite
BAND3_CONFIG = {
    "band": 3,
    "earfcn_dl": 1575,
    "bandwidth_mhz": 10,
    "pci": 301,
    "tx_power_dbm": 30,
    "plmn": "00101",
    "tac": 1,
    "cell_identity": 2561,
    "neighbor_pcis": [110, 204],
}

# degraded variant: minimum power plus a narrow carrier; regresses throughput
DEGRADED_CONFIG = {**BAND3_CONFIG, "tx_power_dbm": 0, "bandwidth_mhz": 1.4}


@pytest.fixture
def band3_config():
    return {k: (list(v) if isinstance(v, list) else v) for k, v in BAND3_CONFIG.items()}


@pytest.fixture(scope="session")
def manual_index():
    return ingest_directory(default_knowledge_dir())


@pytest.fixture
def make_session(tmp_path, manual_index):
    """Factory for a session over a fresh seeded station and temp audit log."""

    def build(script: list[ProviderResponse], seed: int = 7, **policy_overrides):
        overrides = {"retry_backoff_s": 0.0, **policy_overrides}
        policy = Policy().merged(overrides)
        host = StationHost(seed)
        audit = AuditLog(tmp_path / f"audit-{id(script)}.log")
        provider = ScriptedProvider(script)
        return Session("test", host, manual_index, audit, policy, provider)

    return build
