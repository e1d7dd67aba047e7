import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cellops.cellcalc import (
    BandEntry,
    BandTable,
    CellConfig,
    EarfcnRangeError,
    IllegalBandwidthError,
    OffRasterError,
    PciRangeError,
    UnknownBandError,
    default_band_table,
    earfcn_to_freq,
    freq_to_earfcn,
    pci_conflicts,
    pci_decompose,
    prb_for_bandwidth,
    suggest_pci,
    validate_config,
)

# ---- band table fixture ----


def test_band_table_ships_expected_bands():
    table = default_band_table()
    assert table.bands() == [1, 3, 7, 20]
    b3 = table.get(3)
    assert b3.f_dl_low_mhz == 1805.0
    assert b3.n_offs_dl == 1200 and b3.n_dl_min == 1200 and b3.n_dl_max == 1949


def test_band_table_path_is_configurable(tmp_path):
    from cellops.cellcalc import set_default_band_table

    custom = tmp_path / "bands.txt"
    custom.write_text("42 10000 100 100 199\n")
    set_default_band_table(custom)
    try:
        assert default_band_table().bands() == [42]
        assert earfcn_to_freq(42, 150) == pytest.approx(1005.0)
        with pytest.raises(UnknownBandError):
            earfcn_to_freq(3, 1575)  # band 3 is not in the custom table
    finally:
        set_default_band_table(None)
    assert 3 in default_band_table()


def test_band_table_rejects_bad_entries():
    with pytest.raises(ValueError):
        BandTable([BandEntry(band=9, f_dl_low_tenths=100, n_offs_dl=5, n_dl_min=6, n_dl_max=9)])
    with pytest.raises(ValueError):
        BandTable([BandEntry(band=9, f_dl_low_tenths=100, n_offs_dl=5, n_dl_min=5, n_dl_max=5)])


# ---- earfcn <-> frequency ----


@pytest.mark.parametrize(
    "band,earfcn,freq",
    [
        (3, 1200, 1805.0),  # lower bound: earfcn == offset forces the band edge
        (3, 1575, 1842.5),  # 1805.0 + 0.1 * (1575 - 1200)
        (7, 3100, 2655.0),  # 2620.0 + 0.1 * (3100 - 2750)
        (1, 599, 2169.9),
        (20, 6449, 820.9),
    ],
)
def test_earfcn_to_freq(band, earfcn, freq):
    assert earfcn_to_freq(band, earfcn) == pytest.approx(freq, abs=1e-9)


def test_earfcn_to_freq_errors():
    with pytest.raises(UnknownBandError) as err:
        earfcn_to_freq(99, 1200)
    assert err.value.band == 99
    with pytest.raises(EarfcnRangeError) as err:
        earfcn_to_freq(3, 99)
    assert err.value.earfcn == 99


@pytest.mark.parametrize("band,freq,earfcn", [(3, 1805.0, 1200), (3, 1842.5, 1575), (7, 2655.0, 3100)])
def test_freq_to_earfcn(band, freq, earfcn):
    assert freq_to_earfcn(band, freq) == earfcn


def test_freq_to_earfcn_off_raster():
    with pytest.raises(OffRasterError):
        freq_to_earfcn(3, 1842.53)
    with pytest.raises(OffRasterError):
        freq_to_earfcn(3, 1805.0 + 0.05)


def test_freq_to_earfcn_out_of_range():
    # on the raster but below the band's first channel
    with pytest.raises(EarfcnRangeError):
        freq_to_earfcn(3, 1790.0)
    with pytest.raises(UnknownBandError):
        freq_to_earfcn(42, 1805.0)


@given(st.sampled_from([1, 3, 7, 20]), st.data())
def test_earfcn_round_trip(band, data):
    entry = default_band_table().get(band)
    earfcn = data.draw(st.integers(entry.n_dl_min, entry.n_dl_max))
    assert freq_to_earfcn(band, earfcn_to_freq(band, earfcn)) == earfcn


# ---- pci ----


@pytest.mark.parametrize("pci,expected", [(0, (0, 0)), (503, (167, 2)), (301, (100, 1))])
def test_pci_decompose(pci, expected):
    assert pci_decompose(pci) == expected


@pytest.mark.parametrize("pci", [-1, 504, 10_000])
def test_pci_decompose_out_of_range(pci):
    with pytest.raises(PciRangeError):
        pci_decompose(pci)


def test_pci_recompose_exhaustive():
    for pci in range(504):
        group, sector = pci_decompose(pci)
        assert 0 <= group <= 167 and 0 <= sector <= 2
        assert 3 * group + sector == pci


def test_pci_conflicts_examples():
    assert [(c.neighbor, c.kind) for c in pci_conflicts(100, [100])] == [(100, "collision")]
    # 100 % 3 == 103 % 3 == 205 % 3 == 1
    assert [(c.neighbor, c.kind) for c in pci_conflicts(100, [103, 205])] == [
        (103, "mod3"),
        (205, "mod3"),
    ]
    assert pci_conflicts(100, []) == []
    with pytest.raises(PciRangeError):
        pci_conflicts(504, [1])
    with pytest.raises(PciRangeError):
        pci_conflicts(1, [504])


@given(st.integers(0, 503), st.lists(st.integers(0, 503), max_size=12))
def test_pci_conflicts_matches_brute_force(pci, neighbors):
    expected = []
    for n in neighbors:
        if n == pci:
            expected.append((n, "collision"))
        elif n % 3 == pci % 3:
            expected.append((n, "mod3"))
    assert [(c.neighbor, c.kind) for c in pci_conflicts(pci, neighbors)] == expected


# ---- prb ----


@pytest.mark.parametrize("bw,prb", [(1.4, 6), (3, 15), (5, 25), (10, 50), (15, 75), (20, 100)])
def test_prb_for_bandwidth(bw, prb):
    assert prb_for_bandwidth(bw) == prb


def test_prb_matches_rule_except_narrowband():
    for bw in (3, 5, 10, 15, 20):
        assert prb_for_bandwidth(bw) == int(bw / 0.2)
    assert prb_for_bandwidth(1.4) == 6  # the single exception


@pytest.mark.parametrize("bw", [7, 0, -5, "wide", None])
def test_prb_illegal(bw):
    with pytest.raises(IllegalBandwidthError):
        prb_for_bandwidth(bw)


# ---- validate_config ----


def test_validate_well_formed(band3_config):
    report = validate_config(CellConfig.from_dict(band3_config))
    assert report.valid is True
    assert report.issues == []


def test_validate_pci_out_of_range(band3_config):
    report = validate_config(CellConfig.from_dict({**band3_config, "pci": 504}))
    assert not report.valid
    assert any(i.severity == "error" and i.field == "pci" for i in report.issues)


def test_validate_collision_suggests_fix(band3_config):
    report = validate_config(CellConfig.from_dict({**band3_config, "neighbor_pcis": [301]}))
    errors = [i for i in report.issues if i.severity == "error"]
    assert len(errors) == 1 and errors[0].field == "pci"
    fix = int(errors[0].suggested_fix)
    assert pci_conflicts(fix, [301]) == []
    # brute force: no smaller PCI is conflict-free against [301]
    assert all(pci_conflicts(p, [301]) for p in range(fix))


def test_validate_mod3_is_warning(band3_config):
    report = validate_config(CellConfig.from_dict({**band3_config, "neighbor_pcis": [304]}))
    assert report.valid  # warnings only
    assert any(i.severity == "warning" and i.field == "pci" for i in report.issues)


def test_validate_earfcn_clamp_fix(band3_config):
    report = validate_config(CellConfig.from_dict({**band3_config, "earfcn_dl": 99}))
    issue = next(i for i in report.issues if i.field == "earfcn_dl")
    assert issue.severity == "error" and int(issue.suggested_fix) == 1200
    report = validate_config(CellConfig.from_dict({**band3_config, "earfcn_dl": 5000}))
    issue = next(i for i in report.issues if i.field == "earfcn_dl")
    assert int(issue.suggested_fix) == 1949


def test_validate_high_power_warning(band3_config):
    report = validate_config(CellConfig.from_dict({**band3_config, "tx_power_dbm": 43}))
    assert report.valid
    assert any("high power" in i.message for i in report.issues)
    report = validate_config(CellConfig.from_dict({**band3_config, "tx_power_dbm": 47}))
    assert not report.valid


@pytest.mark.parametrize(
    "patch,bad_field",
    [
        ({"band": 99}, "band"),
        ({"bandwidth_mhz": 7}, "bandwidth_mhz"),
        ({"plmn": "12ab3"}, "plmn"),
        ({"plmn": "1234567"}, "plmn"),
        ({"tac": 65536}, "tac"),
        ({"cell_identity": 2**28}, "cell_identity"),
        ({"neighbor_pcis": [1, 504]}, "neighbor_pcis"),
        ({"tx_power_dbm": -1}, "tx_power_dbm"),
    ],
)
def test_validate_field_rules(band3_config, patch, bad_field):
    report = validate_config(CellConfig.from_dict({**band3_config, **patch}))
    assert not report.valid
    assert any(i.severity == "error" and i.field == bad_field for i in report.issues)


def test_validate_never_crashes_on_garbage():
    garbage = CellConfig.from_dict(
        {
            "band": "three",
            "earfcn_dl": None,
            "bandwidth_mhz": "wide",
            "pci": 3.5,
            "tx_power_dbm": "loud",
            "plmn": 12345,
            "tac": [],
            "cell_identity": {},
            "neighbor_pcis": "none",
        }
    )
    report = validate_config(garbage)
    assert report.valid is False
    assert len(report.issues) >= 8


@given(
    st.fixed_dictionaries(
        {
            "band": st.one_of(st.integers(-5, 30), st.none(), st.text(max_size=3)),
            "earfcn_dl": st.one_of(st.integers(-100, 8000), st.none()),
            "bandwidth_mhz": st.one_of(st.sampled_from([1.4, 3, 5, 7, 10, 15, 20]), st.floats(0, 30)),
            "pci": st.integers(-10, 600),
            "tx_power_dbm": st.one_of(st.integers(-5, 50), st.floats(-5, 50)),
            "plmn": st.one_of(st.text(alphabet="0123456789", max_size=8), st.none()),
            "tac": st.integers(-1, 70000),
            "cell_identity": st.integers(-1, 2**29),
            "neighbor_pcis": st.lists(st.integers(-5, 600), max_size=6),
        }
    )
)
@settings(max_examples=200, deadline=None)
def test_validate_pure_and_consistent(raw):
    cfg = CellConfig.from_dict(raw)
    first = validate_config(cfg)
    second = validate_config(cfg)
    assert first == second  # pure: identical input, identical report
    assert first.valid == (not any(i.severity == "error" for i in first.issues))


def test_suggest_pci_avoids_all_conflicts():
    assert suggest_pci([301]) == 0
    # [5, 9, 77] occupies mod groups 2 and 0; smallest free-group PCI is 1
    fix = suggest_pci([5, 9, 77])
    assert fix == 1 and pci_conflicts(fix, [5, 9, 77]) == []
    # neighbors covering every mod-3 group: falls back to smallest non-colliding
    assert suggest_pci([0, 1, 2]) == 3
    assert suggest_pci(list(range(504))) is None


def test_cell_config_canonical_json_stable(band3_config):
    a = CellConfig.from_dict(band3_config)
    b = CellConfig.from_dict(dict(reversed(list(band3_config.items()))))
    assert a.canonical_json() == b.canonical_json()
    assert a == b
