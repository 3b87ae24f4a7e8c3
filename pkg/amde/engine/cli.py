from __future__ import annotations

import argparse
import logging
import sys
from typing import Callable, Dict, List, Optional, Sequence

from ..data.storage import load_dataset, save_dataset
from ..data.synthetic import generate_synthetic
from ..diffcore.gradcheck import run_gradcheck_suite
from ..errors import AmdeError, ConfigError
from ..evaluation.report import write_metrics_csv
from .ablation import ablate, parse_k_values, sweep
from .checkpoint import load_checkpoint
from .config import TrainConfig
from .evaluate import evaluate
from .trainer import train

__all__ = ('main', 'build_parser')

logger = logging.getLogger(__name__)


def _floats(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f'expected comma separated numbers, got {text!r}') from None


def _shape(text: str) -> tuple:
    try:
        shape = tuple(int(part) for part in text.split(','))
    except ValueError:
        shape = ()
    if len(shape) != 3 or min(shape) < 1:
        raise argparse.ArgumentTypeError(
            f'expected channels,height,width, got {text!r}')
    return shape


def _read_config(path: str) -> TrainConfig:
    with open(path, 'rb') as fp:
        return TrainConfig.unmarshal(fp.read())


def gen_data(args: argparse.Namespace) -> int:
    dataset = generate_synthetic(args.ids, args.per_id, args.noise, args.seed,
                                 shape=args.shape,
                                 query_fraction=args.query_fraction)
    save_dataset(dataset, args.out)
    return 0


def train_command(args: argparse.Namespace) -> int:
    config = _read_config(args.config)
    if args.no_progress:
        config = config.replace(progress=False)
    result = train(config, out_dir=args.out)
    logger.info('Final loss %.6f, checksum %s', result.log.final_loss,
                result.log.final_checksum)
    return 0


def eval_command(args: argparse.Namespace) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.data)
    rows = evaluate(checkpoint, dataset, args.occlusion, threads=args.threads)
    write_metrics_csv(args.out, rows)
    return 0


def ablate_command(args: argparse.Namespace) -> int:
    config = _read_config(args.config)
    variants = args.variants.split(',') if args.variants else None
    ablate(config, args.seeds, levels=args.occlusion, variants=variants,
           out=args.out, threads=args.threads)
    return 0


def sweep_command(args: argparse.Namespace) -> int:
    config = _read_config(args.config)
    sweep(config, parse_k_values(args.k), args.lambdas, args.seeds,
          out=args.out, threads=args.threads)
    return 0


def gradcheck_command(args: argparse.Namespace) -> int:
    results = run_gradcheck_suite(full=args.full, cases=args.cases,
                                  seed=args.seed)
    failed = [result for result in results if not result.passed]
    for result in results:
        status = 'ok' if result.passed else 'FAILED'
        print(f'{result.name:<40} {result.cases:>4} '
              f'{result.max_error:.3e} {status}')
    if failed:
        logger.error('%d of %d gradient checks failed', len(failed),
                     len(results))
        return 1
    return 0


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    'gen-data': gen_data,
    'train': train_command,
    'eval': eval_command,
    'ablate': ablate_command,
    'sweep': sweep_command,
    'gradcheck': gradcheck_command,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='amde',
        description='Occlusion-robust metric embeddings at desk scale')
    parser.add_argument('--log-level', default='INFO',
                        choices=('DEBUG', 'INFO', 'WARNING', 'ERROR'))
    commands = parser.add_subparsers(dest='command', required=True)

    gen = commands.add_parser('gen-data', help='generate a dataset directory')
    gen.add_argument('--ids', type=int, default=32)
    gen.add_argument('--per-id', type=int, default=20)
    gen.add_argument('--seed', type=int, default=0)
    gen.add_argument('--noise', type=float, default=0.1)
    gen.add_argument('--query-fraction', type=float, default=0.2)
    gen.add_argument('--shape', type=_shape, default=(1, 64, 32),
                     help='channels,height,width')
    gen.add_argument('--out', required=True)

    trn = commands.add_parser('train', help='train one config')
    trn.add_argument('--config', required=True)
    trn.add_argument('--out', required=True)
    trn.add_argument('--no-progress', action='store_true')

    evl = commands.add_parser('eval', help='evaluate a checkpoint')
    evl.add_argument('--checkpoint', required=True)
    evl.add_argument('--data', required=True)
    evl.add_argument('--occlusion', type=_floats, default=[0.0, 0.3, 0.6])
    evl.add_argument('--threads', type=int, default=None)
    evl.add_argument('--out', required=True)

    abl = commands.add_parser('ablate', help='run the variant grid')
    abl.add_argument('--config', required=True)
    abl.add_argument('--seeds', type=int, default=3)
    abl.add_argument('--occlusion', type=_floats, default=[0.0, 0.3, 0.6])
    abl.add_argument('--variants', default=None,
                     help='comma separated subset, all nine by default')
    abl.add_argument('--threads', type=int, default=None)
    abl.add_argument('--out', required=True)

    swp = commands.add_parser('sweep', help='fixed K and lambda study')
    swp.add_argument('--config', required=True)
    swp.add_argument('--k', default='1,2,3,4,5,adaptive')
    swp.add_argument('--lambda', dest='lambdas', type=_floats, default=[])
    swp.add_argument('--seeds', type=int, default=3)
    swp.add_argument('--threads', type=int, default=None)
    swp.add_argument('--out', required=True)

    grd = commands.add_parser('gradcheck', help='finite-difference checks')
    grd.add_argument('--full', action='store_true')
    grd.add_argument('--cases', type=int, default=20)
    grd.add_argument('--seed', type=int, default=0)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level,
                        format='%(asctime)s %(levelname)s %(name)s: '
                               '%(message)s')
    try:
        return COMMANDS[args.command](args)
    except AmdeError as e:
        print(f'amde {args.command}: {e}', file=sys.stderr)
        return e.code
    except OSError as e:
        print(f'amde {args.command}: {e}', file=sys.stderr)
        return ConfigError.code


if __name__ == '__main__':
    sys.exit(main())
