"""
Tests for scenario loading, validation, canonical serialization and model building.
"""

from textwrap import dedent

import numpy as np
import pytest

from errors import ScenarioError
from dynamics.model import FeedbackLaw, ScheduleLaw
from data import fixtures
from data.scenario import Scenario, load_scenario

SHIPPED = ["dephasing_n2", "dephasing_n2_unequal", "dephasing_n3", "dephasing_n2_controls", "oscillator"]

MINIMAL = dedent("""\
    name: minimal
    dims:
      system: 2
      environment: 2
    model:
      drift: pauli("Z")
      observable: pauli("X")
      interaction_joint: scale(0.1, pauli("ZZ"))
""")

CONTROLLED = '  controls:\n    - pauli("X")\n'


def _scenario(extra: str = "", base: str = MINIMAL) -> Scenario:
    return Scenario.from_text(base + dedent(extra))


class TestShippedScenarios:
    """Every scenario in data/scenarios loads and builds."""

    @pytest.mark.parametrize("name", SHIPPED)
    def test_loads_and_builds(self, scenario_dir, name):
        built = load_scenario(scenario_dir / f"{name}.yaml")
        assert built.name == name
        assert built.initial_states
        for psi in built.initial_states:
            assert psi.size == built.model.factorization.dim
            assert np.linalg.norm(psi) == pytest.approx(1.0)
        assert built.outputs["traces"] == f"out/{name}"

    @pytest.mark.parametrize("name", SHIPPED)
    def test_canonical_round_trip(self, scenario_dir, name):
        text = Scenario.from_file(scenario_dir / f"{name}.yaml").to_yaml()
        assert Scenario.from_text(text).to_yaml() == text

    def test_dephasing_matches_fixture(self, scenario_dir, dfs_model):
        built = load_scenario(scenario_dir / "dephasing_n2.yaml")
        m = built.model
        np.testing.assert_allclose(m.H0_sys, dfs_model.H0_sys)
        np.testing.assert_allclose(m.H_env, dfs_model.H_env)
        np.testing.assert_allclose(m.H_SB(0.0), dfs_model.H_SB(0.0), atol=1e-12)
        np.testing.assert_allclose(m.observable(0.0), dfs_model.observable(0.0))
        assert len(built.system_factors) == 1
        np.testing.assert_allclose(built.system_factors[0], fixtures.dephasing_operator(2))
        assert built.t_span == (0.0, 10.0)
        assert built.settings.dt == 0.01
        np.testing.assert_allclose(built.initial_states[0], fixtures.bell_like_state(*fixtures.DFS_COHERENCE))

    def test_oscillator_settings(self, scenario_dir):
        built = load_scenario(scenario_dir / "oscillator.yaml")
        assert built.settings.max_dim == 40
        assert built.projector.shape == (10, 10)
        assert built.model.observable.frequencies == (-1.0, 1.0)
        assert built.model.r == 1
        np.testing.assert_allclose(built.model.controls[0], 1j * fixtures.displacement_generator(10))

    def test_schedule_law(self, scenario_dir):
        built = load_scenario(scenario_dir / "dephasing_n2_controls.yaml")
        law = built.model.control_law
        assert isinstance(law, ScheduleLaw)
        np.testing.assert_allclose(law.at(3.0), [0.0, 0.3])

    def test_overrides(self, scenario_dir):
        built = load_scenario(scenario_dir / "dephasing_n2.yaml", {"tol": 1e-6, "max_dim": None, "dt": 0.05})
        assert built.settings.tol == 1e-6
        assert built.settings.max_dim is None
        assert built.settings.dt == 0.05


class TestValidation:
    """Schema errors carry the key path and the line."""

    def test_unknown_key(self):
        with pytest.raises(ScenarioError) as info:
            _scenario("""\
                analysis:
                  tol: 1.0e-9
                  colour: red
            """)
        err = info.value
        assert "unknown key 'colour'" in err.message
        assert err.key == "analysis.colour"
        assert err.line == 11

    def test_wrong_type(self):
        with pytest.raises(ScenarioError) as info:
            Scenario.from_text(MINIMAL.replace("system: 2", "system: two"))
        assert info.value.key == "dims.system"
        assert info.value.line == 3

    def test_missing_required(self):
        with pytest.raises(ScenarioError) as info:
            Scenario.from_text(MINIMAL.replace('  observable: pauli("X")\n', ""))
        assert info.value.key == "model.observable"

    def test_interaction_exactly_once(self):
        with pytest.raises(ScenarioError, match="exactly one"):
            Scenario.from_text(MINIMAL.replace("  interaction_joint: scale(0.1, pauli(\"ZZ\"))\n", ""))

    def test_malformed_yaml(self):
        with pytest.raises(ScenarioError) as info:
            Scenario.from_text("name: [unclosed\ndims: {}\n")
        assert "malformed YAML" in info.value.message
        assert info.value.line is not None

    def test_empty_file(self):
        with pytest.raises(ScenarioError, match="empty"):
            Scenario.from_text("")

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ScenarioError, match="cannot read"):
            Scenario.from_file(tmp_path / "missing.yaml")

    def test_floats_are_canonical(self):
        s = _scenario("""\
            analysis:
              t_span: [0, 2]
        """)
        assert s.data["analysis"]["t_span"] == [0.0, 2.0]
        assert "- 0.0" in s.to_yaml()


class TestBuildErrors:
    """Evaluation and dimension errors point at the offending entry."""

    def test_dimension_mismatch(self):
        with pytest.raises(ScenarioError) as info:
            Scenario.from_text(MINIMAL.replace('drift: pauli("Z")', 'drift: pauli("ZZ")')).build()
        err = info.value
        assert "dim 4, expected 2" in err.message
        assert err.key == "model.drift"
        assert (err.line, err.column) == (6, 10)

    def test_expression_column(self):
        with pytest.raises(ScenarioError) as info:
            Scenario.from_text(MINIMAL.replace('drift: pauli("Z")', 'drift: pauli("Z"')).build()
        assert (info.value.line, info.value.column) == (6, 19)

    def test_undefined_name(self):
        with pytest.raises(ScenarioError, match="undefined name 'S'"):
            Scenario.from_text(MINIMAL.replace('drift: pauli("Z")', "drift: S")).build()

    def test_time_dependent_drift(self):
        with pytest.raises(ScenarioError, match="time-independent"):
            Scenario.from_text(MINIMAL.replace('drift: pauli("Z")', 'drift: harmonic(1, pauli("Z"))')).build()

    def test_non_hermitian_interaction(self):
        with pytest.raises(ScenarioError) as info:
            Scenario.from_text(MINIMAL.replace('scale(0.1, pauli("ZZ"))', 'scale(1i, pauli("ZZ"))')).build()
        assert info.value.key == "model"

    def test_bad_t_span(self):
        with pytest.raises(ScenarioError, match="t_span"):
            _scenario("""\
                analysis:
                  t_span: [2.0, 1.0]
            """).build()

    def test_state_size(self):
        with pytest.raises(ScenarioError, match="state has size 4"):
            _scenario("""\
                analysis:
                  initial_states:
                    - system: ket("00")
            """).build()

    def test_unknown_law_type(self):
        text = MINIMAL + CONTROLLED + "  control_law:\n    type: bang-bang\n"
        with pytest.raises(ScenarioError) as info:
            Scenario.from_text(text).build()
        assert "unknown control law type" in info.value.message
        assert info.value.key == "model.control_law.type"


class TestBuildDefaults:
    def test_defaults(self):
        built = Scenario.from_text(MINIMAL).build()
        assert built.system_factors is None
        assert built.projector is None
        assert built.samples == {"states": 20, "times": 5, "max_length": 3}
        np.testing.assert_allclose(built.model.H_env, np.zeros((2, 2)))
        np.testing.assert_allclose(built.initial_states[0], np.kron(np.ones(2) / np.sqrt(2), [1, 0]))

    def test_feedback_law(self):
        text = MINIMAL + CONTROLLED + (
            "  auxiliary:\n"
            '    energy: pauli("Z")\n'
            "  control_law:\n"
            "    type: feedback\n"
            "    outputs: [energy]\n"
            "    alpha_gain: [[0.5]]\n"
        )
        law = Scenario.from_text(text).build().model.control_law
        assert isinstance(law, FeedbackLaw)
        np.testing.assert_allclose(law.controls(0.0, {"energy": 1.0}), [0.5])
