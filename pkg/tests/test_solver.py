import sys
from pathlib import Path

import pytest

from recbid.milp import CONTINUOUS, MilpInstance, check_solution
from recbid.solver import (
    SolveRequest,
    emit_exchange,
    parse_lp,
    parse_solution,
    reference_solve,
    solve,
    solve_external,
)

from conftest import random_instance

DATA = Path(__file__).parent / "data"


def single_var_instance():
    inst = MilpInstance()
    vid = inst.add_var("x", (0,), "x_0", CONTINUOUS, 0.0, 5.0)
    inst.add_row("cap_0", [(vid, 3.0)], "<=", 6.0)
    inst.objective[vid] = 2.0
    return inst


class TestEmit:
    def test_empty_instance_is_header_only(self):
        text = emit_exchange(MilpInstance())
        assert text == "Maximize\n obj:\nSubject To\nBounds\nEnd\n"

    def test_matches_golden_file(self):
        assert emit_exchange(single_var_instance()) == (DATA / "golden_single_var.lp").read_text()

    def test_byte_identical_across_calls(self):
        inst = random_instance(0)
        assert emit_exchange(inst) == emit_exchange(inst)

    def test_unnamed_variable_refused(self):
        inst = MilpInstance()
        inst.add_var("x", (0,), "", CONTINUOUS, 0.0, 1.0)
        with pytest.raises(ValueError, match="no name"):
            emit_exchange(inst)


class TestParseLp:
    def test_roundtrip_structure(self):
        inst = random_instance(1)
        parsed = parse_lp(emit_exchange(inst))
        assert parsed.maximize
        assert parsed.names == inst.names
        assert len(parsed.rows) == inst.n_rows
        assert parsed.binaries == {inst.names[i] for i in inst.binary_ids()}
        for i, name in enumerate(inst.names):
            assert parsed.lb[name] == pytest.approx(inst.lb[i])
            assert parsed.ub[name] == pytest.approx(inst.ub[i])
        # objective coefficients survive exactly
        for vid, coef in inst.objective.items():
            assert parsed.objective[inst.names[vid]] == pytest.approx(coef, abs=0)

    def test_rows_survive_exactly(self):
        inst = single_var_instance()
        parsed = parse_lp(emit_exchange(inst))
        name, coeffs, sense, rhs = parsed.rows[0]
        assert name == "cap_0"
        assert coeffs == {"x_0": 3.0}
        assert sense == "<="
        assert rhs == 6.0

    def test_coefficient_free_term(self):
        parsed = parse_lp("Maximize\n obj: x + 2 y\nSubject To\n r0: x - y <= 1\nEnd\n")
        assert parsed.objective == {"x": 1.0, "y": 2.0}
        assert parsed.rows[0][1] == {"x": 1.0, "y": -1.0}


class TestParseSolution:
    def test_infeasible_status(self, tiny_instance):
        sol = parse_solution("status infeasible\n", tiny_instance)
        assert sol.status == "infeasible"
        assert sol.values is None and sol.objective_value is None

    def test_all_zero_assignment_gives_objective_constant(self):
        inst = single_var_instance()
        inst.objective_constant = 2.5
        text = "status optimal\nobjective 0.0\nx_0 0.0\n"
        sol = parse_solution(text, inst)
        assert sol.objective_value == pytest.approx(2.5)

    def test_missing_variable_named(self, tiny_instance):
        with pytest.raises(ValueError, match="sell_qty_k0"):
            parse_solution("status optimal\n", tiny_instance)

    def test_unknown_status_rejected(self, tiny_instance):
        with pytest.raises(ValueError, match="exploded"):
            parse_solution("status exploded\n", tiny_instance)

    def test_objective_recomputed_not_trusted(self):
        inst = single_var_instance()
        text = "status optimal\nobjective 999.0\nx_0 2.0\n"
        sol = parse_solution(text, inst)
        assert sol.objective_value == pytest.approx(4.0)


class TestReferenceSolve:
    def test_pure_lp_when_no_binaries(self):
        sol = reference_solve(single_var_instance())
        assert sol.status == "optimal"
        assert sol.objective_value == pytest.approx(4.0)

    def test_binary_limit_refusal_names_count(self):
        inst = random_instance(2)  # 54 binaries at K=3, nm=2, nr=2
        with pytest.raises(ValueError, match="54"):
            reference_solve(inst, binary_limit=24)

    def test_infeasible_instance(self):
        inst = MilpInstance()
        vid = inst.add_var("x", (0,), "x_0", CONTINUOUS, 0.0, 1.0)
        inst.add_row("r0", [(vid, 1.0)], ">=", 2.0)
        sol = reference_solve(inst)
        assert sol.status == "infeasible"


@pytest.mark.slow
class TestExternalBackend:
    def test_roundtrip_matches_reference(self, tiny_instance, tmp_path):
        ext = solve_external(tiny_instance, tmp_path)
        assert ext.status == "optimal"
        assert ext.objective_value == pytest.approx(10.0, abs=1e-6)
        assert (tmp_path / "instance.lp").exists()
        assert (tmp_path / "solution.sol").exists()
        assert check_solution(tiny_instance, ext.values) == []

    def test_agreement_on_small_instances(self, tmp_path):
        for seed in range(3):
            inst = random_instance(seed, K=2, nm=2, nr=1)  # 24 binaries
            ref = reference_solve(inst, binary_limit=24)
            ext = solve_external(inst, tmp_path / f"s{seed}")
            assert ref.status == ext.status == "optimal"
            scale = max(1.0, abs(ref.objective_value))
            assert abs(ref.objective_value - ext.objective_value) <= 1e-6 * scale

    def test_solver_cmd_override(self, tiny_instance, tmp_path, monkeypatch):
        stub = tmp_path / "stub.py"
        stub.write_text(
            "import sys\n"
            "open(sys.argv[2], 'w').write('status infeasible\\n')\n"
        )
        monkeypatch.setenv(
            "REC_SOLVER_CMD", f"{sys.executable} {stub} {{lp}} {{sol}}"
        )
        sol = solve_external(tiny_instance, tmp_path)
        assert sol.status == "infeasible"

    def test_failing_command_raises(self, tiny_instance, tmp_path, monkeypatch):
        monkeypatch.setenv("REC_SOLVER_CMD", f"{sys.executable} -c raise {{lp}} {{sol}}")
        with pytest.raises(RuntimeError, match="solver command"):
            solve_external(tiny_instance, tmp_path)


class TestSolveDispatcher:
    def test_reference_backend(self, tiny_instance):
        sol = solve(SolveRequest(instance=tiny_instance, backend="reference"))
        assert sol.objective_value == pytest.approx(10.0)

    def test_external_needs_workdir(self, tiny_instance):
        with pytest.raises(ValueError, match="working directory"):
            solve(SolveRequest(instance=tiny_instance, backend="external"))

    def test_request_validation(self, tiny_instance):
        with pytest.raises(ValueError, match="time_limit"):
            SolveRequest(instance=tiny_instance, time_limit_s=0.0)
        with pytest.raises(ValueError, match="rel_gap"):
            SolveRequest(instance=tiny_instance, rel_gap=-1.0)
        with pytest.raises(ValueError, match="backend"):
            SolveRequest(instance=tiny_instance, backend="quantum")
