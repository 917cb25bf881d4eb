"""
Testes da linha de comando: arquivos gerados e códigos de saída
"""
import json

import pandas as pd
import pytest

from app.exceptions import NonFiniteGradient
from app.main import main
from app.services.reporting import verify_manifest
from tests.conftest import toy_document

CALIBRATION_FLAGS = ["--eps0", "1", "--xi-bound", "50", "--lr-theta", "1e-4", "--lr-eps", "1e-3"]


@pytest.fixture(scope="module")
def datasets(tmp_path_factory):
    """Conjuntos de UQ e calibração gerados pela própria linha de comando"""
    base = tmp_path_factory.mktemp("data")
    uq = base / "uq.csv"
    cal = base / "cal.csv"
    assert main(["gen-data", "--theta0", "1,2", "--n", "8", "--sigma", "10", "--seed", "1",
                 "--role", "uq", "--out", str(uq)]) == 0
    assert main(["gen-data", "--theta0", "1,2", "--n", "3", "--sigma", "20", "--seed", "2",
                 "--role", "calibration", "--out", str(cal)]) == 0
    return uq, cal


def calibrate_args(datasets, out, *extra):
    uq, cal = datasets
    return [
        "calibrate",
        "--uq-data", str(uq),
        "--cal-data", str(cal),
        "--theta0", "1,2",
        "--out", str(out),
        *CALIBRATION_FLAGS,
        *extra,
    ]


class TestGenData:
    """Testes de drcal gen-data"""

    def test_rows_and_manifest(self, tmp_path):
        """20 amostras de UQ e o manifesto ao lado"""
        out = tmp_path / "uq.csv"
        code = main(["gen-data", "--theta0", "1,2", "--n", "20", "--sigma", "10", "--seed", "1",
                     "--role", "uq", "--out", str(out)])
        assert code == 0
        frame = pd.read_csv(out)
        assert list(frame.columns) == ["x1", "x2", "y1"]
        assert len(frame) == 20
        assert (tmp_path / "uq.manifest.json").exists()

    def test_same_flags_same_bytes(self, tmp_path):
        """Mesma semente, mesmo arquivo"""
        args = ["--theta0", "1,2", "--n", "5", "--sigma", "10", "--seed", "7", "--role", "uq"]
        assert main(["gen-data", *args, "--out", str(tmp_path / "a.csv")]) == 0
        assert main(["gen-data", *args, "--out", str(tmp_path / "b.csv")]) == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_zero_sigma(self, tmp_path):
        """σ=0: y = Θ0ᵀx"""
        out = tmp_path / "exact.csv"
        code = main(["gen-data", "--theta0", "1,2", "--n", "4", "--sigma", "0", "--role", "calibration",
                     "--feature-low", "0", "--feature-high", "50", "--out", str(out)])
        assert code == 0
        frame = pd.read_csv(out)
        pd.testing.assert_series_equal(
            frame["y1"], frame["x1"] + 2 * frame["x2"], check_names=False, rtol=1e-9
        )

    def test_default_feature_range_follows_capacity(self, tmp_path):
        """Sem flags: atributos em [0, capacidade/Σθ0] = [0, 200/3]"""
        out = tmp_path / "default.csv"
        code = main(["gen-data", "--theta0", "1,2", "--n", "50", "--sigma", "10", "--seed", "3",
                     "--role", "uq", "--out", str(out)])
        assert code == 0
        features = pd.read_csv(out)[["x1", "x2"]].to_numpy()
        assert features.min() >= 0.0
        assert features.max() <= 200.0 / 3.0

    def test_explicit_zero_to_hundred_range(self, tmp_path):
        """--feature-low 0 --feature-high 100 reproduz o intervalo [0, 100]"""
        out = tmp_path / "wide.csv"
        code = main(["gen-data", "--theta0", "1,2", "--n", "50", "--sigma", "10", "--seed", "3",
                     "--role", "uq", "--feature-low", "0", "--feature-high", "100", "--out", str(out)])
        assert code == 0
        features = pd.read_csv(out)[["x1", "x2"]].to_numpy()
        assert features.min() >= 0.0
        assert features.max() <= 100.0
        assert features.max() > 200.0 / 3.0

    def test_missing_flag_is_usage_error(self, tmp_path):
        """Sem --n: código 2"""
        code = main(["gen-data", "--theta0", "1,2", "--sigma", "10", "--role", "uq",
                     "--out", str(tmp_path / "x.csv")])
        assert code == 2

    def test_bad_theta_is_usage_error(self, tmp_path):
        """Θ0 não numérico: código 2"""
        code = main(["gen-data", "--theta0", "1,a", "--n", "3", "--sigma", "10", "--role", "uq",
                     "--out", str(tmp_path / "x.csv")])
        assert code == 2

    def test_negative_sigma(self, tmp_path):
        """σ < 0: código 2"""
        code = main(["gen-data", "--theta0", "1,2", "--n", "3", "--sigma", "-1", "--role", "uq",
                     "--out", str(tmp_path / "x.csv")])
        assert code == 2


class TestCalibrateCommand:
    """Testes de drcal calibrate"""

    def test_run_directory(self, datasets, tmp_path):
        """Pasta da execução completa e manifesto íntegro"""
        out = tmp_path / "run"
        assert main(calibrate_args(datasets, out, "--max-iters", "2", "--plot")) == 0
        for name in ("config.json", "trajectory.csv", "final.json", "manifest.json", "loss.svg", "epsilon.svg"):
            assert (out / name).exists(), name

        final = json.loads((out / "final.json").read_text())
        trajectory = pd.read_csv(out / "trajectory.csv")
        assert len(trajectory) == final["iters"]
        assert {"iter", "mse", "task1", "task2", "total", "eps_1", "theta_1_1", "theta_2_1"} <= set(
            trajectory.columns
        )
        assert len(final["theta"]) == 2
        assert verify_manifest(out / "manifest.json") == []

    def test_zero_iterations(self, datasets, tmp_path):
        """--max-iters 0: trajetória vazia e saída 0"""
        out = tmp_path / "run"
        assert main(calibrate_args(datasets, out, "--max-iters", "0")) == 0
        assert len(pd.read_csv(out / "trajectory.csv")) == 0
        assert json.loads((out / "final.json").read_text())["iters"] == 0

    def test_frozen_radius(self, datasets, tmp_path):
        """--lr-eps 0: ε final igual a ε0"""
        out = tmp_path / "run"
        args = calibrate_args(datasets, out, "--max-iters", "2")
        args[args.index("--lr-eps") + 1] = "0"
        assert main(args) == 0
        assert json.loads((out / "final.json").read_text())["epsilon"] == [1.0]

    def test_reproducible_outputs(self, datasets, tmp_path):
        """Mesmas entradas: trajectory.csv e final.json idênticos"""
        for name in ("a", "b"):
            assert main(calibrate_args(datasets, tmp_path / name, "--max-iters", "2")) == 0
        for name in ("trajectory.csv", "final.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_dump_program(self, datasets, tmp_path):
        """--dump-program grava o LP da primeira amostra"""
        out = tmp_path / "run"
        assert main(calibrate_args(datasets, out, "--max-iters", "0", "--dump-program")) == 0
        assert (out / "program" / "layout.json").exists()

    def test_missing_dataset(self, datasets, tmp_path):
        """CSV inexistente: código 2"""
        uq, _ = datasets
        args = calibrate_args((uq, tmp_path / "nao_existe.csv"), tmp_path / "run", "--max-iters", "1")
        assert main(args) == 2

    def test_infeasible_case(self, datasets, tmp_path):
        """Demanda acima da capacidade total: código 3"""
        case_path = tmp_path / "heavy.json"
        case_path.write_text(json.dumps(toy_document(demand_mw=[0.0, 900.0])))
        args = calibrate_args(datasets, tmp_path / "run", "--max-iters", "1", "--case", str(case_path))
        assert main(args) == 3

    def test_numerical_failure(self, datasets, tmp_path, mocker):
        """Gradiente não finito: código 4"""
        mocker.patch(
            "app.commands.calibrate.calibrate",
            side_effect=NonFiniteGradient("Gradiente com valores não finitos"),
        )
        assert main(calibrate_args(datasets, tmp_path / "run", "--max-iters", "1")) == 4

    def test_unexpected_error(self, datasets, tmp_path, mocker):
        """Erro fora da hierarquia do domínio: código 4"""
        mocker.patch("app.commands.calibrate.calibrate", side_effect=ZeroDivisionError("x"))
        assert main(calibrate_args(datasets, tmp_path / "run", "--max-iters", "1")) == 4

    def test_invalid_risk_level(self, datasets, tmp_path):
        """γ fora de (0, 1): código 2"""
        args = calibrate_args(datasets, tmp_path / "run", "--max-iters", "1", "--risk-level", "1.5")
        assert main(args) == 2

    def test_changed_input_breaks_manifest(self, datasets, tmp_path):
        """Entrada alterada depois da execução aparece na verificação"""
        uq, cal = datasets
        copy = tmp_path / "cal.csv"
        copy.write_bytes(cal.read_bytes())
        out = tmp_path / "run"
        assert main(calibrate_args((uq, copy), out, "--max-iters", "0")) == 0
        copy.write_text(copy.read_text() + "1,1,3\n")
        assert verify_manifest(out / "manifest.json") == [str(copy)]


class TestEvaluateCommand:
    """Testes de drcal evaluate"""

    def test_evaluates_final_parameters(self, datasets, tmp_path):
        """Avalia final.json no conjunto de calibração"""
        uq, cal = datasets
        run = tmp_path / "run"
        assert main(calibrate_args(datasets, run, "--max-iters", "1")) == 0
        out = tmp_path / "eval"
        code = main(["evaluate", "--final", str(run / "final.json"), "--uq-data", str(uq),
                     "--theta0", "1,2", "--data", str(cal), "--out", str(out), "--xi-bound", "50"])
        assert code == 0
        report = json.loads((out / "evaluation.json").read_text())
        assert len(report["samples"]) == 3
        assert len(report["distribution_shift"]) == 1
        assert report["distribution_shift"][0] >= 0.0

    def test_final_without_theta(self, datasets, tmp_path):
        """final.json de um operador (sem Θ) não pode ser avaliado"""
        uq, cal = datasets
        final = tmp_path / "final.json"
        final.write_text(json.dumps({"epsilon": [1.0], "converged": True, "iters": 2}))
        code = main(["evaluate", "--final", str(final), "--uq-data", str(uq), "--theta0", "1,2",
                     "--data", str(cal), "--out", str(tmp_path / "eval")])
        assert code == 2


class TestSweepCommand:
    """Testes de drcal sweep"""

    def test_single_grid_point(self, datasets, tmp_path):
        """Um ponto: summary.csv com uma linha"""
        uq, _ = datasets
        out = tmp_path / "sweep"
        code = main(["sweep", "--uq-data", str(uq), "--theta0", "1,2", "--sigma-c", "20", "--eta", "1",
                     "--n-cal", "2", "--max-iters", "1", "--out", str(out), *CALIBRATION_FLAGS[:4]])
        assert code == 0
        summary = pd.read_csv(out / "summary.csv")
        assert len(summary) == 1
        assert summary.loc[0, "status"] == "ok"
        assert (out / "trend.json").exists()
        assert (out / "sigma_20_eta_1" / "final.json").exists()

    def test_bad_grid(self, datasets, tmp_path):
        """Grade com texto: código 2"""
        uq, _ = datasets
        code = main(["sweep", "--uq-data", str(uq), "--theta0", "1,2", "--sigma-c", "a,b",
                     "--out", str(tmp_path / "sweep")])
        assert code == 2


class TestParser:
    """Testes gerais do analisador de argumentos"""

    def test_no_command(self):
        """Sem subcomando: código 2"""
        assert main([]) == 2

    def test_version(self, capsys):
        """--version imprime a versão e sai com 0"""
        assert main(["--version"]) == 0
        assert "drcal" in capsys.readouterr().out
