"""cli - 命令行入口

    fellerpy verify-semigroup --config exp.json --out out/
    fellerpy bounds           --config exp.json --out out/
    fellerpy simulate         --config exp.json --out out/ [--seed N] [--n-paths N]
    fellerpy corrupt          --config exp.json --out out/
    fellerpy regularize       --config exp.json --out out/
    fellerpy audit            --config exp.json --out out/ [--diagnostic]
    fellerpy fdd              --config exp.json --out out/

退出码：0 通过；1 性质不成立（残差超出容差、审计失败）；2 输入错误（配置校验失败、缺少上游产物）。
"""
from __future__ import annotations
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from ._typing import CommandName, LogLevel
from .config import ExperimentConfig, ExperimentStore, load_config
from .distributions import (bound_grid, expected_lv, expected_truncated_distance, fdd_expectation,
                            marginal)
from .exceptions import ConfigError, FellerError
from .log import create_logger
from .opcalc import op_norm, recover_generator, verify_exp_log_roundtrip, verify_log_additivity
from .paths import (CorruptedPath, EventPath, canonical_partition, corrupt_ensemble,
                    empirical_marginal, read_corruptions_csv, read_path_csv, replicate_seed,
                    resolve_workers, simulate_ensemble, write_corruptions_csv, write_partition,
                    write_path_csv)
from .regularizer import (DEFAULT_SCHEME, audit_times, markov_audit, rational_continuity_mask,
                          regularize, verify_cadlag, verify_modification)
from .report import build_report, frame_records, write_report, write_table
from .semigroup import (SemigroupFamily, stationary_distribution, strong_continuity_bound,
                        verify_chapman_kolmogorov, verify_identity_at_zero,
                        verify_strong_continuity)
from .variation import ensemble_variation

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_INPUT = 2

# 随机流编号：0 模拟，1 污染（见 paths），以下为审计
AUDIT_STREAM = 2
MODIFICATION_STREAM = 3

SWEEP_POINTS = 6


class FellerExperiment:
    """一次实验的运行环境：配置、输出目录、日志与报告写出

    Args:
        config (ExperimentConfig): 已通过 validate 的配置
        out_dir (Path | str): 输出目录
        log_level (LogLevel, optional): 日志级别. Defaults to 'INFO'.
        workers (int, optional): 线程数，缺省读取 FELLER_THREADS

    Attributes:
        logger (logging.Logger): 写到 out_dir/fellerpy.log 与控制台
    """

    def __init__(self, config: ExperimentConfig, out_dir: Path | str,
                 log_level: LogLevel = 'INFO', workers: int = None) -> None:
        self.config = config.validate()
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.logger = create_logger(self.out_dir / "fellerpy.log", level=log_level)
        self.workers = resolve_workers(workers)

        self.gen = config.build_generator()
        self.gamma = config.build_distribution()
        self.tm = config.build_metric()
        self.fam = SemigroupFamily(self.gen)
        self.config_hash = config.config_hash()

    @property
    def paths_dir(self) -> Path:
        return self.out_dir / "paths"

    @property
    def regularized_dir(self) -> Path:
        return self.out_dir / "regularized"

    def finish(self, command: CommandName, passed: bool, body: Dict) -> int:
        report = build_report(command, self.config_hash, passed, body)
        write_report(report, self.out_dir / f"{command}.json")
        if passed:
            self.logger.info("%s passed", command)
            return EXIT_PASS
        self.logger.error("%s failed, see %s.json", command, command)
        return EXIT_FAIL

    # -- 路径产物 ----------------------------------------------------------

    def _manifest(self) -> Dict:
        file = self.paths_dir / "manifest.json"
        if not file.exists():
            raise FileNotFoundError(f"{file} not found, run 'fellerpy simulate' first")
        with open(file, 'r', encoding='utf-8') as f:
            return json.load(f)

    def load_paths(self) -> List[EventPath]:
        manifest = self._manifest()
        try:
            return [
                read_path_csv(self.paths_dir / name, manifest["horizon"], manifest["n_states"])
                for name in manifest["paths"]
            ]
        except (FellerError, ValueError, KeyError) as e:
            raise ConfigError(f"malformed path artifact in {self.paths_dir}: {e}") from e

    def load_corrupted(self, required: bool = True) -> List:
        """带污染旁注文件的路径；没有旁注文件时返回干净路径（required=False）"""
        paths = self.load_paths()
        manifest = self._manifest()
        result = []
        for name, path in zip(manifest["paths"], paths):
            sidecar = self.paths_dir / name.replace(".csv", ".corrupt.csv")
            if sidecar.exists():
                try:
                    result.append(read_corruptions_csv(path, sidecar))
                except (FellerError, ValueError, KeyError) as e:
                    raise ConfigError(f"malformed corruption file {sidecar}: {e}") from e
            elif required:
                raise FileNotFoundError(f"{sidecar} not found, run 'fellerpy corrupt' first")
            else:
                result.append(path)
        return result

    def _regularize(self, path):
        cfg = self.config
        return regularize(path, cfg.horizon_fraction, cfg.k_max, self.tm, DEFAULT_SCHEME,
                          cfg.fallback, cfg.window, cfg.growth_tol)

    # -- 命令 --------------------------------------------------------------

    def cmd_verify_semigroup(self) -> int:
        """Q_0 = Id、Chapman–Kolmogorov、随机性、强连续性以及生成元恢复"""
        cfg, tol, fam = self.config, self.config.tolerances, self.fam
        identity = verify_identity_at_zero(fam)

        grid = np.linspace(0.0, cfg.horizon, SWEEP_POINTS)
        ck = max(verify_chapman_kolmogorov(fam, s, t) for s in grid for t in grid)
        stochastic = max(
            float(np.max(np.abs(fam.kernel_at(t).q.sum(axis=1) - 1))) for t in grid)

        f = cfg.build_f()
        ts = [2.0**-j for j in range(1, 21)]
        deviations = verify_strong_continuity(fam, f, ts)
        bounds = np.array([strong_continuity_bound(fam, f, t) for t in ts])
        continuity_excess = float(np.max(deviations - bounds))

        norm = self.gen.norm
        # op_norm(A w) = 0.3 落在恢复的收敛保证内
        w = 0.3 / norm if norm > 0 else 1.0
        q_w = fam.kernel_at(w).q
        recovery = op_norm(recover_generator(q_w, w) - self.gen.a)
        roundtrip = verify_exp_log_roundtrip(q_w, tol["roundtrip"])
        w_small = 0.05 / norm if norm > 0 else 1.0
        additivity = verify_log_additivity(
            fam.kernel_at(w_small).q, fam.kernel_at(2 * w_small).q, tol["roundtrip"])

        checks = {
            "identity": (identity, tol["identity"]),
            "chapman_kolmogorov": (ck, tol["chapman_kolmogorov"]),
            "stochastic": (stochastic, tol["stochastic"]),
            "strong_continuity": (max(continuity_excess, 0.0), tol["strong_continuity"]),
            "recovery": (recovery, tol["recovery"]),
            "roundtrip": (roundtrip, tol["roundtrip"]),
            "log_additivity": (additivity, tol["roundtrip"]),
        }
        residuals = {}
        for name, (value, limit) in checks.items():
            residuals[name] = dict(residual=value, tolerance=limit, within=value <= limit)
            self.logger.info("%-20s residual %.3e (tol %.0e)", name, value, limit)
        passed = all(r["within"] for r in residuals.values())
        body = dict(residuals=residuals, strong_continuity_deviations=deviations.tolist(),
                    strong_continuity_times=ts, recovery_time=w)
        return self.finish("verify-semigroup", passed, body)

    def cmd_bounds(self) -> int:
        """增量上界 E[ρ̃(B_t, B_s)] <= M_T (t - s) 与变差上界 E[LV] <= K (t - s)"""
        cfg, tol = self.config, self.config.tolerances
        bounds, grid, worst = bound_grid(self.gamma, self.fam, self.tm, cfg.horizon, cfg.grid_size)
        grid["within"] = grid["expectation"] <= grid["bound"] + tol["bound_slack"]
        write_table(grid, self.out_dir / "bounds_grid.csv")
        increment_ok = bool(grid["within"].all())

        lv_rows = []
        horizon_T = cfg.horizon_fraction
        for k in sorted({1, 2, 4, cfg.export_k, cfg.k_max}):
            partition = canonical_partition(horizon_T, k)
            exact = expected_lv(self.gamma, self.fam, partition.as_floats(), self.tm)
            limit = bounds.k * float(horizon_T)
            lv_rows.append(dict(k=k, points=len(partition), mesh=float(partition.mesh),
                                expected_lv=exact, bound=limit,
                                within=exact <= limit + tol["lv_slack"]))
        lv_table = pd.DataFrame(lv_rows)
        lv_ok = bool(lv_table["within"].all())

        worst_row = grid.loc[grid["ratio"].idxmax()] if len(grid) else None
        self.logger.info("M_T=%.6g K=%.6g worst ratio %.4g", bounds.m_t, bounds.k, worst)
        body = dict(constants=bounds.to_dict(), worst_ratio=worst,
                    worst_at=None if worst_row is None else [worst_row["s"], worst_row["t"]],
                    increment_bound_holds=increment_ok, variation_bound_holds=lv_ok,
                    variation=frame_records(lv_table))
        return self.finish("bounds", increment_ok and lv_ok, body)

    def cmd_simulate(self) -> int:
        cfg = self.config
        paths = simulate_ensemble(self.gen, self.gamma, cfg.horizon, cfg.n_paths, cfg.seed,
                                  self.workers)
        self.paths_dir.mkdir(parents=True, exist_ok=True)
        names = []
        for i, path in enumerate(paths):
            name = f"path_{i:05d}.csv"
            write_path_csv(path, self.paths_dir / name)
            names.append(name)
        manifest = dict(horizon=cfg.horizon, n_states=self.gen.n, seed=cfg.seed, paths=names,
                        config_hash=self.config_hash)
        write_report(manifest, self.paths_dir / "manifest.json")

        t = float(cfg.horizon_fraction)
        freq, se = empirical_marginal(paths, t, self.gen.n)
        exact = marginal(self.gamma, self.fam, t).gamma
        jumps = np.array([p.n_jumps() for p in paths])
        self.logger.info("simulated %d paths, mean %.3f jumps", len(paths), jumps.mean())
        body = dict(n_paths=len(paths), mean_jumps=float(jumps.mean()), marginal_time=t,
                    empirical_marginal=freq, standard_error=se, exact_marginal=exact)
        return self.finish("simulate", True, body)

    def cmd_corrupt(self) -> int:
        cfg = self.config
        if cfg.corruption_count < 1:
            raise ConfigError("corrupt needs corruption_count >= 1")
        if self.gen.n < 2:
            raise ConfigError("corrupt needs at least two states")
        manifest = self._manifest()
        corrupted = corrupt_ensemble(self.load_paths(), cfg.corruption_count, cfg.seed,
                                     self.workers)
        for name, path in zip(manifest["paths"], corrupted):
            write_corruptions_csv(path, self.paths_dir / name.replace(".csv", ".corrupt.csv"))
        body = dict(n_paths=len(corrupted), corruption_count=cfg.corruption_count)
        return self.finish("corrupt", True, body)

    def cmd_regularize(self) -> int:
        """正则化路径在 τ_{export_k}^T 上取样后写出"""
        cfg = self.config
        sources = self.load_corrupted(required=False)
        summary = ensemble_variation(sources, cfg.horizon_fraction, cfg.k_max, self.tm,
                                     cfg.window, cfg.growth_tol, self.workers)
        partition = canonical_partition(cfg.horizon_fraction, cfg.export_k)
        self.regularized_dir.mkdir(parents=True, exist_ok=True)
        write_partition(partition, self.regularized_dir / "partition.txt")
        times = partition.as_floats()
        n_case1 = 0
        for i, source in enumerate(sources):
            rp = self._regularize(source)
            n_case1 += rp.blowup_case
            df = pd.DataFrame({"time": times, "state": rp.eval_grid(partition)})
            write_table(df, self.regularized_dir / f"path_{i:05d}.csv")
        body = dict(variation=summary, n_case1=n_case1, export_k=cfg.export_k,
                    partition_points=len(partition))
        return self.finish("regularize", True, body)

    def _audit_paths(self, diagnostic: bool = False) -> Tuple[Dict, bool]:
        cfg, scheme = self.config, DEFAULT_SCHEME
        sources = self.load_corrupted(required=cfg.corruption_count > 0)[:cfg.n_cadlag_paths]
        n_failures, agreement, continuity, base_mismatch = 0, [], [], 0
        diagnostic_rates = []
        first_failures = []
        for i, source in enumerate(sources):
            rp = self._regularize(source)
            times = audit_times(cfg.n_audit, rp.horizon, replicate_seed(cfg.seed, i, AUDIT_STREAM),
                                margin=2 * scheme.reach_at(rp.horizon))
            report = verify_cadlag(rp, times, scheme)
            n_failures += len(report.failures)
            first_failures.extend(report.failures[:max(0, 5 - len(first_failures))])
            agreement.append(
                verify_modification(rp, cfg.n_audit, replicate_seed(cfg.seed, i, MODIFICATION_STREAM)))
            continuity.append(float(np.mean(rational_continuity_mask(rp, times, scheme))))
            if isinstance(source, CorruptedPath) and not rp.blowup_case:
                base_mismatch += sum(
                    rp.eval_at(c) != source.base.eval_at(c) for c in source.corruption_times
                    if c <= rp.horizon)
            if diagnostic and isinstance(source, CorruptedPath):
                diagnostic_rates.append(
                    verify_modification(rp, cfg.n_audit,
                                        replicate_seed(cfg.seed, i, MODIFICATION_STREAM), True))
        body = dict(
            n_paths=len(sources), n_audits=cfg.n_audit, cadlag_failures=n_failures,
            first_cadlag_failures=first_failures, modification_rate=float(np.min(agreement)),
            rational_continuity_rate=float(np.min(continuity)),
            corruption_time_mismatches=int(base_mismatch))
        passed = (n_failures == 0 and body["modification_rate"] == 1.0 and
                  body["rational_continuity_rate"] == 1.0 and base_mismatch == 0)
        if diagnostic_rates:
            body["diagnostic_modification_rate"] = float(np.min(diagnostic_rates))
        return body, passed

    def _audit_markov(self) -> Tuple[List[Dict], bool]:
        cfg, tol = self.config, self.config.tolerances
        f = cfg.build_f()
        reports = []
        for s, t in cfg.markov_times():
            for past in ([None, s / 2] if s > 0 else [None]):
                report = markov_audit(
                    self.fam, self.gamma, s, t, f, cfg.n_paths, cfg.seed, past_time=past,
                    corruption_count=cfg.corruption_count, k_max=cfg.k_max, tm=self.tm,
                    fallback=cfg.fallback, se_multiplier=tol["se_multiplier"],
                    exempt_fraction=tol["exempt_fraction"], workers=self.workers)
                self.logger.info("markov s=%g t=%g past=%s: max deviation %.4g, %d/%d breaches",
                                 s, t, past, report.max_deviation, report.n_breaches,
                                 len(report.cells))
                reports.append(report.to_dict())
        return reports, all(r["passed"] for r in reports)

    def cmd_audit(self, diagnostic: bool = False) -> int:
        """càdlàg、修正、有理连续性与马氏性审计"""
        paths_body, paths_ok = self._audit_paths(diagnostic)
        markov, markov_ok = self._audit_markov()
        body = dict(paths=paths_body, markov=markov)
        if diagnostic:
            rate = paths_body.get("diagnostic_modification_rate")
            body["diagnostic"] = True
            if rate is not None and rate < 1.0:
                self.logger.warning(
                    "diagnostic: agreement %.4f at audit times including corruption times", rate)
        return self.finish("audit", paths_ok and markov_ok, body)

    def cmd_fdd(self) -> int:
        """精确的边缘分布、两点 E[ρ̃] 表与马氏审计所用函数的两点期望"""
        cfg = self.config
        times = np.linspace(0.0, cfg.horizon, 5)
        marginals = {f"{t:g}": marginal(self.gamma, self.fam, t).gamma for t in times}
        rows = []
        for i, s in enumerate(times):
            for t in times[i:]:
                rows.append(dict(s=s, t=t, expectation=expected_truncated_distance(
                    self.gamma, self.fam, s, t, self.tm)))
        table = pd.DataFrame(rows)
        write_table(table, self.out_dir / "fdd_increments.csv")
        f = cfg.build_f()
        two_point = []
        for s, t in cfg.markov_times():
            value = fdd_expectation(self.gamma, self.fam, [s, s + t], np.outer(f, f))
            two_point.append(dict(s=s, t=t, expectation=value))
        body = dict(marginals=marginals, stationary=stationary_distribution(self.gen),
                    increments=frame_records(table), two_point_f=two_point)
        return self.finish("fdd", True, body)


COMMANDS = ("verify-semigroup", "bounds", "simulate", "corrupt", "regularize", "audit", "fdd")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fellerpy", description="有限状态 Feller 半群的构造、模拟与正则化审计")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="配置文件路径或已保存的实验名")
        p.add_argument("--out", default="out", help="输出目录")
        p.add_argument("--seed", type=int, default=None, help="覆盖配置中的种子")
        p.add_argument("--n-paths", type=int, default=None, help="覆盖配置中的路径数")
        p.add_argument("--log-level", default="INFO",
                       choices=["DEBUG", "INFO", "WARNING", "ERROR"])
        p.add_argument("--store-name", default=None, help="把载入的配置保存到配置库")
        if name == "audit":
            p.add_argument("--diagnostic", action="store_true",
                           help="额外在污染时刻审计，展示修正的必要性")
    return parser


def _prepare_config(args) -> ExperimentConfig:
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.n_paths is not None:
        config.n_paths = args.n_paths
        config.n_cadlag_paths = min(config.n_cadlag_paths, args.n_paths)
    config.validate()
    if args.store_name:
        ExperimentStore().save_config(args.store_name, config)
    return config


def main(argv: Sequence[str] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _prepare_config(args)
        runner = FellerExperiment(config, args.out, args.log_level)
    except (FellerError, FileNotFoundError) as e:
        return _report_error(e, EXIT_INPUT)
    command = args.command.replace("-", "_")
    try:
        if args.command == "audit":
            return runner.cmd_audit(diagnostic=args.diagnostic)
        return getattr(runner, f"cmd_{command}")()
    except (ConfigError, FileNotFoundError) as e:
        return _report_error(e, EXIT_INPUT)
    except FellerError as e:
        # 配置已通过校验，此后的库错误属于运行失败
        return _report_error(e, EXIT_FAIL)


def _report_error(e: Exception, code: int) -> int:
    logging.getLogger(__name__).error("%s: %s", type(e).__name__, e)
    print(f"fellerpy: {e}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
