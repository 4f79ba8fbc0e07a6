"""
permkit - permutation tests from the command line

    permkit test      --data ex1.csv --stat sum-first-k:2 --method corrected-subset --perms S.txt --seed 7
    permkit bc        --data ex1.csv --stat sum-first-k:2 --perms S.txt --steps 2 --M 99 --seed 7
    permkit exact     --values 1,2,-0.5,0.3 --stat sum-first-k:2 --method naive-subset --perms S.txt
    permkit calibrate --n 4 --stat sum-first-k:2 --method corrected-subset --perms S.txt --reps 100000 --seed 1
    permkit group     --generators gens.txt --n 4

Reports go to stdout, logs to stderr (and LOG_FILE). Exit codes: 0 ok,
2 input error, 3 capacity exceeded.
"""
import os
import sys
import argparse
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from dotenv import load_dotenv

from services.errors import DomainError, PermkitError
from services.logging_config import configure_logging
from services.permutation_service import Perm
from services.statistics_service import Statistic
from services.testing_engine import Method, MethodSpec, parse_method
from services.calibration_service import DATA_SAMPLERS, CalibrationConfig, parse_alphas
from services.io_service import (
    emit_json,
    format_perm_set,
    load_data,
    load_distribution,
    load_mask,
    load_perm_set,
    require_length,
)
from services.runner_service import (
    ExactRequest,
    PermutationTestRunner,
    TestRequest,
    build_statistic,
)

logger = logging.getLogger('permkit')

DEFAULT_OUT = {'test': 'json', 'bc': 'json', 'exact': 'json', 'calibrate': 'csv', 'group': 'text'}


@dataclass
class RunConfig:
    subcommand: str
    data: Optional[str] = None
    values: Optional[str] = None
    stat: Optional[str] = None
    method: Optional[str] = None
    perms: Optional[str] = None
    dist: Optional[str] = None
    generators: Optional[str] = None
    full: Optional[int] = None
    uniform_sn: Optional[int] = None
    mask: Optional[str] = None
    M: int = 0
    steps: int = 1
    seed: Optional[int] = None
    assigned: Optional[str] = None
    alphas: Optional[str] = None
    reps: int = 10_000
    n: Optional[int] = None
    cap: Optional[int] = None
    sampler: str = 'gaussian'
    workers: Optional[int] = None
    draws: bool = False
    brute_force: bool = False
    out: Optional[str] = None
    provided: tuple = ()

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> 'RunConfig':
        fields = {k: v for k, v in vars(args).items() if k in cls.__dataclass_fields__}
        cfg = cls(**fields)
        cfg.provided = tuple(fields)
        if cfg.out is None:
            cfg.out = DEFAULT_OUT[cfg.subcommand]
        return cfg

    def echo(self) -> Dict:
        """Settings that determine the result, for replaying a run"""
        skip = {'out', 'workers', 'draws'}
        return {k: getattr(self, k) for k in self.provided if getattr(self, k) is not None and k not in skip}


def _add_source_flags(parser: argparse.ArgumentParser):
    source = parser.add_argument_group('permutation source (exactly one)')
    source.add_argument('--perms', help='permutation-set file, one image per line')
    source.add_argument('--dist', help='distribution file, "weight i1 ... in" per line')
    source.add_argument('--generators', help='generator file; the source is the generated subgroup')
    source.add_argument('--full', type=int, metavar='N', help='all N! permutations (small N only)')
    source.add_argument('--uniform-sn', dest='uniform_sn', type=int, metavar='N',
                        help='uniform sampler on S_N (sampled methods only)')
    parser.add_argument('--cap', type=int, help='subgroup closure cap')


def _add_data_flags(parser: argparse.ArgumentParser):
    parser.add_argument('--data', help='CSV with column x (optional y, group)')
    parser.add_argument('--values', help='comma-separated data values instead of --data')
    parser.add_argument('--stat', required=True, help='sum-first-k:K | abs-corr | diff-means[:MASKFILE]')
    parser.add_argument('--mask', help='group mask file for diff-means')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='permkit', description='Permutation tests with exact validity checks')
    sub = parser.add_subparsers(dest='subcommand', required=True)

    test = sub.add_parser('test', help='compute a p-value or e-value')
    _add_data_flags(test)
    _add_source_flags(test)
    test.add_argument('--method', required=True)
    test.add_argument('--M', dest='M', type=int, default=0)
    test.add_argument('--steps', type=int, default=1)
    test.add_argument('--seed', type=int)
    test.add_argument('--assigned', help='realized assignment for the randomization test, e.g. "3 4 1 2"')
    test.add_argument('--draws', action='store_true', help='include the drawn permutations in the report')
    test.add_argument('--out', choices=['json', 'csv'])

    bc = sub.add_parser('bc', help='Besag-Clifford p-value with the permutation kernel')
    _add_data_flags(bc)
    _add_source_flags(bc)
    bc.add_argument('--M', dest='M', type=int, required=True)
    bc.add_argument('--steps', type=int, default=1)
    bc.add_argument('--seed', type=int)
    bc.add_argument('--draws', action='store_true')
    bc.add_argument('--out', choices=['json', 'csv'])

    exact = sub.add_parser('exact', help='exact law of a p-value under the conditional null')
    _add_data_flags(exact)
    _add_source_flags(exact)
    exact.add_argument('--method', required=True)
    exact.add_argument('--M', dest='M', type=int, default=0)
    exact.add_argument('--steps', type=int, default=1)
    exact.add_argument('--brute-force', dest='brute_force', action='store_true')
    exact.add_argument('--out', choices=['json', 'csv'])

    calibrate = sub.add_parser('calibrate', help='Monte Carlo rejection rates under an i.i.d. null')
    _add_data_flags(calibrate)
    _add_source_flags(calibrate)
    calibrate.add_argument('--method', required=True)
    calibrate.add_argument('--M', dest='M', type=int, default=0)
    calibrate.add_argument('--steps', type=int, default=1)
    calibrate.add_argument('--seed', type=int)
    calibrate.add_argument('--n', type=int, help='sample size (defaults to the data length)')
    calibrate.add_argument('--reps', type=int, default=10_000)
    calibrate.add_argument('--alphas', default='0.05,0.1,1/3,0.5,1')
    calibrate.add_argument('--sampler', choices=sorted(DATA_SAMPLERS), default='gaussian')
    calibrate.add_argument('--workers', type=int)
    calibrate.add_argument('--out', choices=['json', 'csv'])

    group = sub.add_parser('group', help='subgroup generated by a set of permutations')
    group.add_argument('--generators', required=True)
    group.add_argument('--n', type=int, help='n for an empty generator file')
    group.add_argument('--cap', type=int)
    group.add_argument('--out', choices=['json', 'text'])
    return parser


def _parse_values(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.replace(',', ' ').split()], dtype=float)
    except ValueError:
        raise DomainError(f"--values must be numbers, got {text!r}")


def _load_inputs(cfg: RunConfig, required: bool = True) -> Dict[str, Optional[np.ndarray]]:
    if cfg.data and cfg.values:
        raise DomainError("give --data or --values, not both")
    if cfg.data:
        return load_data(cfg.data)
    if cfg.values:
        return {'x': _parse_values(cfg.values), 'y': None, 'group': None}
    if required:
        raise DomainError("data required: --data FILE or --values LIST")
    return {'x': None, 'y': None, 'group': None}


def _statistic(cfg: RunConfig, inputs: Dict) -> Statistic:
    selector = cfg.stat
    mask = inputs.get('group')
    name, _, arg = selector.partition(':')
    if name.strip().lower() == 'diff-means':
        if arg:
            mask = load_mask(arg)
        selector = 'diff-means'
    if cfg.mask:
        mask = load_mask(cfg.mask)
    x = inputs.get('x')
    if x is not None:
        require_length('y', inputs.get('y'), x.shape[0])
        require_length('group mask', mask, x.shape[0])
    return build_statistic(selector, y=inputs.get('y'), mask=mask)


def _source(cfg: RunConfig, runner: PermutationTestRunner, n: Optional[int] = None):
    kind, source = runner.source(
        perms=load_perm_set(cfg.perms) if cfg.perms else None,
        dist=load_distribution(cfg.dist) if cfg.dist else None,
        generators=load_perm_set(cfg.generators, allow_empty=True) if cfg.generators else None,
        full_n=cfg.full,
        uniform_sn=cfg.uniform_sn,
        n=n,
        **({'cap': cfg.cap} if cfg.cap else {}),
    )
    logger.debug(f"Permutation source: {kind}")
    return source


def _write(text: str):
    sys.stdout.write(text)
    sys.stdout.flush()


def _single_row_csv(payload: Dict) -> str:
    flat = {k: (' '.join(map(str, v)) if isinstance(v, list) else v) for k, v in payload.items()
            if not isinstance(v, dict)}
    return pd.DataFrame([flat]).to_csv(index=False, lineterminator='\n')


def run_test(cfg: RunConfig, runner: PermutationTestRunner) -> int:
    inputs = _load_inputs(cfg)
    x = inputs['x']
    method = Method.BESAG_CLIFFORD if cfg.subcommand == 'bc' else parse_method(cfg.method)
    request = TestRequest(
        x=x,
        stat=_statistic(cfg, inputs),
        method=method,
        source=_source(cfg, runner, n=x.shape[0]),
        M=cfg.M,
        steps=cfg.steps,
        seed=cfg.seed,
        assigned=Perm.parse(cfg.assigned) if cfg.assigned else None,
    )
    report = runner.run_test(request)
    payload = report.to_dict(include_draws=cfg.draws)
    if cfg.out == 'csv':
        _write(_single_row_csv(payload))
    else:
        payload['config'] = cfg.echo()
        _write(emit_json(payload))
    return 0


def run_exact(cfg: RunConfig, runner: PermutationTestRunner) -> int:
    inputs = _load_inputs(cfg)
    values = inputs['x']
    request = ExactRequest(
        values=values,
        stat=_statistic(cfg, inputs),
        method=parse_method(cfg.method),
        source=_source(cfg, runner, n=values.shape[0]),
        M=cfg.M,
        steps=cfg.steps,
        brute_force=cfg.brute_force,
    )
    payload = runner.run_exact(request)
    if cfg.out == 'csv' and 'atoms' in payload:
        rows = [{'value': v, 'probability': p} for v, p in payload['atoms'].items()]
        _write(pd.DataFrame(rows, columns=['value', 'probability']).to_csv(index=False, lineterminator='\n'))
    else:
        payload['config'] = cfg.echo()
        _write(emit_json(payload))
    return 0


def run_calibrate(cfg: RunConfig, runner: PermutationTestRunner) -> int:
    inputs = _load_inputs(cfg, required=cfg.sampler == 'values' or cfg.n is None)
    x = inputs['x']
    n = cfg.n if cfg.n is not None else x.shape[0]
    if x is not None and x.shape[0] != n:
        raise DomainError(f"--n={n} disagrees with the data length {x.shape[0]}")
    config = CalibrationConfig(
        spec=MethodSpec(parse_method(cfg.method), _source(cfg, runner, n=n), M=cfg.M, steps=cfg.steps),
        stat=_statistic(cfg, inputs),
        n=n,
        sampler=cfg.sampler,
        values=tuple(x.tolist()) if cfg.sampler == 'values' else None,
        alphas=parse_alphas(cfg.alphas),
        reps=cfg.reps,
    )
    curve = runner.run_calibrate(config, cfg.seed, workers=cfg.workers)
    if cfg.out == 'json':
        payload = curve.to_dict()
        payload['config'] = cfg.echo()
        _write(emit_json(payload))
    else:
        _write(curve.to_csv())
    return 0


def run_group(cfg: RunConfig, runner: PermutationTestRunner) -> int:
    generators: List[Perm] = load_perm_set(cfg.generators, allow_empty=True)
    group = runner.run_group(generators, n=cfg.n, cap=cfg.cap)
    if cfg.out == 'json':
        _write(emit_json({'order': len(group), 'perms': [list(p.image) for p in group]}))
    else:
        _write(format_perm_set(group))
    return 0


COMMANDS = {
    'test': run_test,
    'bc': run_test,
    'exact': run_exact,
    'calibrate': run_calibrate,
    'group': run_group,
}


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    configure_logging()
    cfg = RunConfig.from_args(args)
    logger.info(f"permkit {cfg.subcommand} started (pid {os.getpid()})")
    try:
        return COMMANDS[cfg.subcommand](cfg, PermutationTestRunner())
    except PermkitError as e:
        logger.error(f"permkit {cfg.subcommand} failed: {e}")
        print(f"permkit: error: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception(f"Unexpected error in permkit {cfg.subcommand}: {e}")
        print(f"permkit: internal error: {e}", file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
