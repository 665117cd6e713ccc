"""Configuration, validation, and domain-type tests."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from reactmc import (ChannelResponse, ConfigValidationError, CrTable,
                     RadialField, ReleaseSchedule, config_hash,
                     equilibrium_concentration, load_config,
                     table1_defaults, validate)
from reactmc.config import (default_config_path, molar_to_per_m3,
                            per_m3_to_molar)


class TestValidate:
    def test_defaults_valid(self, defaults):
        assert validate(defaults) is defaults
        assert defaults.dim == 3
        assert defaults.n_tx_a == 5e3
        assert defaults.distance == 250e-9
        assert defaults.kf == 1e-17
        assert defaults.kb == 1e25

    def test_zero_dt_rejected(self, defaults):
        with pytest.raises(ConfigValidationError, match="dt"):
            validate(defaults.replace(dt=0.0))

    def test_receiver_containing_transmitter_rejected(self, defaults):
        with pytest.raises(ConfigValidationError, match="rx_radius"):
            validate(defaults.replace(rx_radius=300e-9))

    def test_grid_coarser_than_step_length_rejected(self, defaults):
        with pytest.raises(ConfigValidationError, match="dr"):
            validate(defaults.replace(dr=50e-9))

    def test_all_violations_reported(self, defaults):
        bad = defaults.replace(dt=0.0, rx_radius=300e-9, dim=4)
        with pytest.raises(ConfigValidationError) as err:
            validate(bad)
        text = str(err.value)
        assert "dt" in text and "rx_radius" in text and "dim" in text

    def test_idempotent(self, defaults):
        assert validate(validate(defaults)) is defaults


class TestEquilibrium:
    def test_molar_example(self, defaults):
        # kf = 1.4e11 / (M s), kb = 1.4e-3 M/s => C_eq = 1e-7 M
        kf_si = 1.4e11 / molar_to_per_m3(1.0)
        kb_si = molar_to_per_m3(1.4e-3)
        ca, cb = equilibrium_concentration(
            defaults.replace(kf=kf_si, kb=kb_si))
        assert per_m3_to_molar(ca) == pytest.approx(1e-7, rel=1e-12)

    def test_si_defaults(self, defaults):
        ca, cb = equilibrium_concentration(defaults)
        assert ca == cb == pytest.approx(1e21, rel=1e-12)

    def test_zero_production(self, defaults):
        assert equilibrium_concentration(defaults.replace(kb=0.0)) == (0, 0)

    def test_no_equilibrium_without_forward_rate(self, defaults):
        with pytest.raises(ValueError, match="kf"):
            equilibrium_concentration(defaults.replace(kf=0.0))

    @given(kf=st.floats(1e-20, 1e-14), kb=st.floats(1e20, 1e28))
    def test_product_matches_rate_ratio(self, kf, kb):
        cfg = table1_defaults().replace(kf=kf, kb=kb)
        ca, cb = equilibrium_concentration(cfg)
        assert ca * cb == pytest.approx(kb / kf, rel=1e-12)


class TestConfigIO:
    def test_roundtrip(self, tmp_path, defaults):
        path = tmp_path / "cfg.json"
        with open(default_config_path()) as f:
            data = json.load(f)
        data["dt"] = 2e-6
        path.write_text(json.dumps(data))
        assert load_config(path).dt == 2e-6

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        with open(default_config_path()) as f:
            data = json.load(f)
        data["bogus_key"] = 1
        path.write_text(json.dumps(data))
        with pytest.raises(ConfigValidationError, match="bogus_key"):
            load_config(path)

    def test_hash_changes_with_any_field(self, defaults):
        assert config_hash(defaults) != config_hash(defaults.replace(dt=2e-6))
        assert config_hash(defaults) == config_hash(table1_defaults())

    def test_derived_quantities(self, defaults):
        assert defaults.n_steps == round(defaults.t_max / defaults.dt)
        assert defaults.n_cells == round(defaults.r_max / defaults.dr)
        vol = 4.0 / 3.0 * math.pi * defaults.rx_radius**3
        assert defaults.rx_volume == pytest.approx(vol, rel=1e-12)


class TestDomainTypes:
    def test_radial_field_shape_mismatch(self):
        with pytest.raises(ValueError):
            RadialField(np.arange(3.0), np.arange(4.0), 0.0)

    def test_schedule_snapping(self):
        sched = ReleaseSchedule(releases_a=((1.4e-6, 10.0),),
                                releases_b=((2.6e-6, 5.0),))
        snapped = sched.snapped(1e-6)
        assert snapped.releases_a[0][0] == pytest.approx(1e-6)
        assert snapped.releases_b[0][0] == pytest.approx(3e-6)
        assert snapped.max_time() == pytest.approx(3e-6)

    def test_channel_response_lengths(self):
        with pytest.raises(ValueError):
            ChannelResponse(np.arange(3.0), np.arange(3.0), np.arange(2.0))

    def test_cr_table_entry_count(self):
        means = {(s, f"{i:02b}"): (1.0, 2.0)
                 for s in (0, 1) for i in range(4)}
        table = CrTable(3, "mosk", means)
        assert len(table.means) == 8
        with pytest.raises(ValueError):
            CrTable(3, "mosk", dict(list(means.items())[:-1]))

    def test_cr_table_csv(self, tmp_path):
        table = CrTable(1, "mosk", {(0, ""): (0.5, 1.5), (1, ""): (2.0, 0.1)})
        path = tmp_path / "table.csv"
        table.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "s,isi_bits,ybar_a,ybar_b"
        assert len(lines) == 3
