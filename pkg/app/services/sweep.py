"""
Varredura de calibrações sobre grades de σ_c e η, com relatório de tendência
"""
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from scipy.stats import spearmanr

from app.exceptions import DrcalError
from app.models.dataset import DatasetRole
from app.schemas.calibration import CalibrationConfig
from app.services.calibrator import calibrate
from app.services.datasets import FLOAT_FORMAT, gen_synthetic_dataset, read_dataset
from app.services.power_case import load_case
from app.services.reporting import write_json, write_run

logger = logging.getLogger(__name__)


class SweepJob(BaseModel):
    """Um ponto da grade; só contém tipos serializáveis para o pool de processos"""

    index: int
    sigma_index: int
    sigma_c: float
    eta: float
    case: str
    uq_data: str
    theta0: List[List[float]]
    eps0: float
    n_cal: int = Field(..., ge=1)
    seed: int
    config: Dict
    out_dir: str


def point_directory(out_dir: Path, sigma_c: float, eta: float) -> Path:
    return Path(out_dir) / f"sigma_{sigma_c:g}_eta_{eta:g}"


def run_point(job: SweepJob) -> Dict:
    """Gera o conjunto de calibração do ponto, calibra e grava a pasta da execução"""
    row = {"sigma_c": job.sigma_c, "eta": job.eta, "seed": job.seed}
    started = time.perf_counter()
    try:
        case = load_case(job.case)
        uq_data = read_dataset(job.uq_data, DatasetRole.UQ)
        theta0 = np.array(job.theta0, dtype=float)
        cal_data = gen_synthetic_dataset(
            theta0, job.n_cal, job.sigma_c, job.seed, DatasetRole.CALIBRATION, case.wind_capacity
        )
        config = CalibrationConfig.model_validate({**job.config, "eta": job.eta, "seed": job.seed})
        state = calibrate(case, uq_data, cal_data, theta0, job.eps0, config)
        write_run(state, Path(job.out_dir), config.model_dump(mode="json"))
    except (DrcalError, ValueError) as exc:
        logger.error(f"Ponto σ_c={job.sigma_c}, η={job.eta} falhou: {exc}")
        row.update(status="failed", error=str(exc))
        return row

    row["status"] = "ok"
    row["iters"] = state.iter
    row["converged"] = state.converged
    for j, value in enumerate(state.epsilon):
        row[f"eps_star_{j + 1}"] = float(value)
    for f, farms in enumerate(state.theta.tolist()):
        for j, value in enumerate(farms):
            row[f"theta_star_{f + 1}_{j + 1}"] = value
    row["theta_deviation"] = float(np.linalg.norm(state.theta - theta0))
    if state.loss_history:
        last = state.loss_history[-1]
        row.update(mse=last.mse, task1=last.task1, task2=last.task2, total=last.total)
    row["duration_s"] = time.perf_counter() - started
    return row


def trend_report(summary: pd.DataFrame) -> Dict:
    """
    Tendências por valor de η: correlação de Spearman entre σ_c e ε* médio,
    e pares adjacentes monotônicos de ε* e de ‖Θ* − Θ0‖
    """
    report = {}
    ok = summary[summary["status"] == "ok"] if "status" in summary else summary.iloc[0:0]
    eps_columns = [c for c in ok.columns if c.startswith("eps_star_")]
    for eta, group in ok.groupby("eta"):
        group = group.sort_values("sigma_c")
        eps_star = group[eps_columns].mean(axis=1).to_numpy()
        deviation = group["theta_deviation"].to_numpy()
        entry = {
            "sigma_c": group["sigma_c"].tolist(),
            "eps_star_mean": eps_star.tolist(),
            "eps_increasing_pairs": int(np.sum(np.diff(eps_star) > 0)),
            "deviation_nondecreasing_pairs": int(np.sum(np.diff(deviation) >= 0)),
            "pairs": max(len(group) - 1, 0),
            "spearman_rho": None,
        }
        if len(group) >= 2 and np.ptp(eps_star) > 0:
            rho, _ = spearmanr(group["sigma_c"].to_numpy(), eps_star)
            entry["spearman_rho"] = float(rho)
        report[f"eta_{eta:g}"] = entry

    for sigma_c, group in ok.groupby("sigma_c"):
        group = group.sort_values("eta")
        if len(group) >= 2 and "mse" in group:
            report[f"sigma_{sigma_c:g}_by_eta"] = {
                "eta": group["eta"].tolist(),
                "mse": group["mse"].tolist(),
                "task": (group["task1"] + group["task2"]).tolist(),
            }
    return report


def run_sweep(
    case: str,
    uq_data: str,
    theta0: np.ndarray,
    eps0: float,
    sigma_grid: List[float],
    eta_grid: List[float],
    n_cal: int,
    seed: int,
    config: CalibrationConfig,
    out_dir: Path,
    jobs: int = 1,
) -> pd.DataFrame:
    """
    Executa a grade σ_c x η

    O ponto com índice k na grade de σ_c usa a semente base + k para o ruído
    do conjunto de calibração, igual para todos os valores de η.

    Returns:
        Tabela resumo (também gravada em summary.csv, com trend.json ao lado)
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base_config = config.model_dump(mode="json")
    work = []
    for k, sigma_c in enumerate(sigma_grid):
        for eta in eta_grid:
            work.append(
                SweepJob(
                    index=len(work),
                    sigma_index=k,
                    sigma_c=sigma_c,
                    eta=eta,
                    case=str(case),
                    uq_data=str(uq_data),
                    theta0=np.asarray(theta0, dtype=float).tolist(),
                    eps0=eps0,
                    n_cal=n_cal,
                    seed=seed + k,
                    config=base_config,
                    out_dir=str(point_directory(out_dir, sigma_c, eta)),
                )
            )
    logger.info(f"Varredura com {len(work)} pontos, {jobs} processo(s)")

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_point, work))
    else:
        rows = [run_point(job) for job in work]

    # duração varia entre execuções; fica fora do resumo
    summary = pd.DataFrame(rows).drop(columns=["duration_s"], errors="ignore")
    summary.to_csv(out_dir / "summary.csv", index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    write_json(out_dir / "trend.json", trend_report(summary))
    failed = int((summary["status"] != "ok").sum())
    if failed:
        logger.warning(f"{failed} ponto(s) da varredura falharam")
    return summary
