"""
Command-line entry point.

    python bench.py decompose --synth P=3,kind=kruskal --method cpd --rank 3 --out results/cpd
    python bench.py compare --header cube.json --data cube.bsq --methods cpd,lmlra,btd-ll1
    python bench.py rank-estimate --synth P=3,kind=kruskal --ranks 1-5
    python bench.py synth --synth width=32,height=32,bands=64,P=4,noise=0.02 --out data/cube
"""
import argparse
import sys

from src.bench.harness import COMMANDS, METHODS
from src.core.config import apply_overrides, get_cfg_defaults, update_cfg
from src.core.errors import EXIT_IO, EXIT_OK, TensorBenchError, exit_code_for

# short names accepted by --synth
SYNTH_KEYS = {
    'p': 'SYNTH.NUM_ENDMEMBERS',
    'endmembers': 'SYNTH.NUM_ENDMEMBERS',
    'width': 'SYNTH.WIDTH',
    'w': 'SYNTH.WIDTH',
    'height': 'SYNTH.HEIGHT',
    'h': 'SYNTH.HEIGHT',
    'bands': 'SYNTH.BANDS',
    'b': 'SYNTH.BANDS',
    'noise': 'SYNTH.NOISE_SIGMA',
    'sigma': 'SYNTH.NOISE_SIGMA',
    'smoothness': 'SYNTH.SMOOTHNESS',
    'kind': 'SYNTH.KIND',
    'seed': 'SEED',
}


def int_list(text):
    try:
        return [int(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")


def block_list(text):
    """'2,2,1' -> [2, 2, 1] (rank-(L,L,1) blocks) and '(2,2,2);(1,1,1)' -> [[2, 2, 2], [1, 1, 1]]."""
    if '(' not in text:
        return int_list(text)
    blocks = []
    for chunk in text.split(';'):
        values = int_list(chunk.strip().strip('()'))
        if len(values) != 3:
            raise argparse.ArgumentTypeError(f"block '{chunk}' must be a triple (L,M,N)")
        blocks.append(values)
    return blocks


def rank_range(text):
    """'3' or '1-5'."""
    try:
        low, _, high = text.partition('-')
        low = int(low)
        return low, int(high) if high else low
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected R or RMIN-RMAX, got '{text}'")


def synth_overrides(text, cfg):
    """KEY=VALUE,... into a typed yacs override list."""
    overrides = []
    for item in filter(None, text.split(',')):
        key, sep, value = item.partition('=')
        if not sep or key.strip().lower() not in SYNTH_KEYS:
            raise argparse.ArgumentTypeError(f"unknown synthetic setting '{item}', expected one of {sorted(SYNTH_KEYS)}")
        full_key = SYNTH_KEYS[key.strip().lower()]
        node, name = cfg, full_key
        if '.' in full_key:
            section, name = full_key.split('.')
            node = cfg[section]
        current = node[name]
        try:
            overrides += [full_key, type(current)(value.strip())]
        except ValueError:
            raise argparse.ArgumentTypeError(f"'{value}' is not a valid {type(current).__name__} for {key}")
    return overrides


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--cfg', type=str, help='YAML or JSON config file path')
    common.add_argument('--out', type=str, help='output directory (default: OUTPUT_DIR/<timestamp>_EXP_NAME)')
    common.add_argument('--seed', type=int)
    common.add_argument('--deterministic', action='store_true', help='no timestamps or wall times in outputs')
    common.add_argument('--header', type=str, help='cube JSON header')
    common.add_argument('--data', type=str, help='cube BSQ payload')
    common.add_argument('--synth', type=str, help='synthetic cube settings, e.g. P=3,noise=0.01,kind=kruskal')
    common.add_argument('--log-level', type=str, choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument('--rank', type=int, help='CPD rank R')
    solver.add_argument('--mlranks', type=int_list, help='LMLRA ranks R1,R2,R3')
    solver.add_argument('--blocks', type=block_list, help='BTD blocks L1,L2,... or (L,M,N);...')
    solver.add_argument('--tol', type=float, help='stopping tolerance on the relative residual change')
    solver.add_argument('--max-iters', type=int)
    solver.add_argument('--restarts', type=int, help='BTD restarts and CPD starts')

    parser = argparse.ArgumentParser(description='Tensor decomposition benchmark for hyperspectral cubes')
    sub = parser.add_subparsers(dest='command', required=True)

    decompose = sub.add_parser('decompose', parents=[common, solver], help='fit one model')
    decompose.add_argument('--method', choices=METHODS)

    compare = sub.add_parser('compare', parents=[common, solver], help='fit several models and rank them')
    compare.add_argument('--methods', type=lambda s: [m for m in s.split(',') if m],
                         help=f'comma-separated subset of {",".join(METHODS)}')
    compare.add_argument('--match-budget', action='store_true',
                         help='pick LMLRA/BTD ranks with parameter counts nearest the CPD model')

    estimate = sub.add_parser('rank-estimate', parents=[common, solver], help='CORCONDIA over a rank range')
    estimate.add_argument('--ranks', type=rank_range, help='R or RMIN-RMAX')
    estimate.add_argument('--threshold', type=float)

    sub.add_parser('synth', parents=[common], help='write a synthetic cube and its ground truth')
    return parser


def overrides_from_args(args, cfg):
    """CLI flags as a yacs override list; flags left unset keep the file/default values."""
    overrides = []

    def put(key, value):
        if value is not None:
            overrides.extend([key, value])

    put('SEED', args.seed)
    put('LOG_LEVEL', args.log_level)
    if args.deterministic:
        put('DETERMINISTIC', True)
    put('INPUT.HEADER', args.header)
    put('INPUT.DATA', args.data)
    if args.synth:
        overrides += synth_overrides(args.synth, cfg)

    if args.command != 'synth':
        put('CPD.RANK', args.rank)
        put('LMLRA.MLRANKS', args.mlranks)
        put('BTD.BLOCKS', args.blocks)
        for section in ('CPD', 'LMLRA', 'BTD'):
            put(f'{section}.TOL', args.tol)
            put(f'{section}.MAX_ITERS', args.max_iters)
        put('BTD.RESTARTS', args.restarts)
        put('CPD.NUM_STARTS', args.restarts)

    if args.command == 'decompose':
        put('METHOD', args.method)
    elif args.command == 'compare':
        put('COMPARE.METHODS', args.methods)
        if args.match_budget:
            put('COMPARE.MATCH_BUDGET', True)
    elif args.command == 'rank-estimate':
        if args.ranks is not None:
            put('RANK.MIN', args.ranks[0])
            put('RANK.MAX', args.ranks[1])
        put('RANK.THRESHOLD', args.threshold)
    return overrides


def main(argv=None):
    """Returns the process exit code; argparse usage errors exit with 2 directly."""
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        cfg = update_cfg(args.cfg) if args.cfg is not None else get_cfg_defaults()
        try:
            overrides = overrides_from_args(args, cfg)
        except argparse.ArgumentTypeError as exc:
            parser.error(str(exc))
        cfg = apply_overrides(cfg, overrides)
        COMMANDS[args.command](cfg, args.out)
    except TensorBenchError as exc:
        print(f'{args.command}: error: {exc}', file=sys.stderr)
        return exit_code_for(exc)
    except OSError as exc:
        print(f'{args.command}: error: {exc}', file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
