"""
Saídas de uma execução: config.json, trajectory.csv, final.json, manifest.json e gráficos SVG
"""
import hashlib
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from app import __version__  # noqa: E402
from app.models.calibration import CalibrationState  # noqa: E402
from app.schemas.manifest import RunManifest  # noqa: E402
from app.services.datasets import FLOAT_FORMAT  # noqa: E402

logger = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = "drcal"


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_json(path: Path, document) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def trajectory_frame(state: CalibrationState) -> pd.DataFrame:
    """Uma linha por iteração registrada: perdas, ε por parque e Θ achatado"""
    rows = []
    for k, breakdown in enumerate(state.loss_history):
        row = {
            "iter": k + 1,
            "mse": breakdown.mse,
            "task1": breakdown.task1,
            "task2": breakdown.task2,
            "total": breakdown.total,
        }
        for j, value in enumerate(state.epsilon_history[k]):
            row[f"eps_{j + 1}"] = value
        if k < len(state.theta_history):
            for f, farms in enumerate(state.theta_history[k]):
                for j, value in enumerate(farms):
                    row[f"theta_{f + 1}_{j + 1}"] = value
        rows.append(row)
    if rows:
        return pd.DataFrame(rows)
    columns = ["iter", "mse", "task1", "task2", "total"]
    columns += [f"eps_{j + 1}" for j in range(len(state.epsilon))]
    if state.theta is not None:
        columns += [
            f"theta_{f + 1}_{j + 1}"
            for f in range(state.theta.shape[0])
            for j in range(state.theta.shape[1])
        ]
    return pd.DataFrame(columns=columns)


def final_document(state: CalibrationState) -> Dict:
    document = {
        "epsilon": [float(e) for e in state.epsilon],
        "converged": state.converged,
        "iters": state.iter,
    }
    if state.theta is not None:
        document["theta"] = state.theta.tolist()
    if state.loss_history:
        document["breakdown"] = state.loss_history[-1].model_dump()
    return document


def write_run(state: CalibrationState, out_dir: Path, config: Dict) -> List[Path]:
    """
    Grava a pasta da execução

    Args:
        state: Estado final da calibração
        out_dir: Pasta de saída (criada se necessário)
        config: Configuração resolvida (gravada em config.json)

    Returns:
        Caminhos gravados
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trajectory = out_dir / "trajectory.csv"
    trajectory_frame(state).to_csv(
        trajectory, index=False, float_format=FLOAT_FORMAT, lineterminator="\n"
    )
    written = [
        write_json(out_dir / "config.json", config),
        trajectory,
        write_json(out_dir / "final.json", final_document(state)),
    ]
    logger.info(f"Resultados gravados em {out_dir}")
    return written


def plot_trajectory(state: CalibrationState, out_dir: Path) -> List[Path]:
    """Curvas de perda (loss.svg) e trajetória de ε (epsilon.svg)"""
    out_dir = Path(out_dir)
    frame = trajectory_frame(state)
    paths = []

    figure, axes = plt.subplots(1, 2, figsize=(10, 4))
    for column in ("total", "task1", "task2"):
        axes[0].plot(frame["iter"], frame[column], label=column)
    axes[0].set_xlabel("iteração")
    axes[0].set_ylabel("$")
    axes[0].legend()
    axes[1].plot(frame["iter"], frame["mse"], color="tab:red")
    axes[1].set_xlabel("iteração")
    axes[1].set_ylabel("MSE (MW²)")
    figure.tight_layout()
    paths.append(_save(figure, out_dir / "loss.svg"))

    figure, axis = plt.subplots(figsize=(5, 4))
    for column in [c for c in frame.columns if c.startswith("eps_")]:
        axis.plot(frame["iter"], frame[column], label=column)
    axis.set_xlabel("iteração")
    axis.set_ylabel("ε")
    axis.legend()
    figure.tight_layout()
    paths.append(_save(figure, out_dir / "epsilon.svg"))
    return paths


def _save(figure, path: Path) -> Path:
    figure.savefig(path, format="svg", metadata={"Date": None})
    plt.close(figure)
    return path


def write_manifest(
    out_dir: Path,
    command: Sequence[str],
    config: Dict,
    inputs: Iterable,
    seed: Optional[int],
    duration_s: float,
    name: str = "manifest.json",
) -> Path:
    """Grava o manifesto com SHA-256 de cada arquivo de entrada"""
    manifest = RunManifest(
        command=list(command),
        config=config,
        input_hashes={str(Path(p)): sha256_file(p) for p in inputs},
        seed=seed,
        tool_version=__version__,
        duration_s=max(duration_s, 0.0),
    )
    path = Path(out_dir) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def verify_manifest(path: Path) -> List[str]:
    """
    Recalcula os hashes das entradas registradas

    Returns:
        Arquivos ausentes ou com hash diferente (lista vazia = manifesto íntegro)
    """
    manifest = RunManifest.model_validate_json(Path(path).read_text(encoding="utf-8"))
    mismatched = []
    for file_path, expected in manifest.input_hashes.items():
        if not Path(file_path).exists() or sha256_file(file_path) != expected:
            mismatched.append(file_path)
    if mismatched:
        logger.warning(f"Manifesto {path}: entradas alteradas {mismatched}")
    return mismatched
