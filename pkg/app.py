"""
GAN Ensemble Lab - Main Application
Command-line entry point for training GAN ensembles on the 2D Gaussian grid
and evaluating their mode coverage.

    python app.py --config configs/ci.yaml --out runs/ci train-pool
    python app.py --config configs/ci.yaml --out runs/ci report
"""
import logging
import sys
from pathlib import Path
from typing import Optional

import click

from config import VERSION, get_config
from utils.errors import EnsembleGanError, NonFiniteError
from utils.helpers import write_json

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger(__name__)


def configure_logging(level: Optional[str] = None, log_file: Optional[str] = None) -> None:
    """Configure root logging once; later calls only adjust the level."""
    env = get_config()
    level = (level or env.LOG_LEVEL).upper()
    root = logging.getLogger()
    if not root.handlers:
        logging.basicConfig(level=level, format=LOG_FORMAT)
        log_file = log_file or env.LOG_FILE
        if log_file:
            Path(log_file).parent.mkdir(parents=True, exist_ok=True)
            handler = logging.FileHandler(log_file, encoding='utf-8')
            handler.setFormatter(logging.Formatter(LOG_FORMAT))
            root.addHandler(handler)
    root.setLevel(level)


def create_cli() -> click.Group:
    """Application factory for the command-line interface."""

    @click.group(context_settings={'help_option_names': ['-h', '--help']})
    @click.version_option(VERSION, prog_name='gan-ensemble-lab')
    @click.option('--config', 'config_path', type=click.Path(dir_okay=False, path_type=Path), default=None,
                  help='Experiment YAML file')
    @click.option('--seed', type=int, default=None, help='Master seed (overrides the config)')
    @click.option('--profile', type=click.Choice(['ci', 'paper']), default=None, help='Schedule profile')
    @click.option('--out', 'output_dir', type=click.Path(file_okay=False), default=None, help='Run directory')
    @click.option('--workers', type=int, default=None, help='Parallel member trainings')
    @click.option('--resume', is_flag=True, help='Continue a partial pool or boosting run')
    @click.option('--log-level', type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False),
                  default=None, help='Logging verbosity')
    @click.pass_context
    def cli(ctx, config_path, seed, profile, output_dir, workers, resume, log_level):
        """Train and evaluate GAN ensembles on the 2D Gaussian grid."""
        from commands import RunContext

        configure_logging(log_level)
        ctx.obj = RunContext(config_path=config_path,
                             overrides={'master_seed': seed, 'profile': profile, 'output_dir': output_dir},
                             workers=workers, resume=resume)

    _register_commands(cli)
    return cli


def _register_commands(cli: click.Group) -> None:
    """Register the command groups on the entry point."""
    from commands.evaluate import evaluate_commands
    from commands.pool import pool_commands

    for group in (pool_commands, evaluate_commands):
        for name, command in group.commands.items():
            cli.add_command(command, name)


def _dump_nonfinite(error: NonFiniteError, output_dir: Optional[Path]) -> Optional[Path]:
    """Write the diagnostic state of a NaN/Inf failure next to the run manifest."""
    if output_dir is None or not Path(output_dir).is_dir():
        return None
    return write_json(Path(output_dir) / 'nan_dump.json', {'error': str(error), 'state': error.state})


def main(argv=None) -> None:
    """Run the CLI, translating lab errors into exit codes."""
    cli = create_cli()
    ctx = None
    try:
        ctx = cli.make_context('gan-ensemble-lab', list(sys.argv[1:] if argv is None else argv))
        with ctx:
            cli.invoke(ctx)
    except click.exceptions.Exit as e:
        sys.exit(e.exit_code)
    except click.ClickException as e:
        e.show()
        sys.exit(e.exit_code)
    except click.exceptions.Abort:
        click.echo('Aborted!', err=True)
        sys.exit(1)
    except EnsembleGanError as e:
        logger.error(f"{type(e).__name__}: {e}")
        if isinstance(e, NonFiniteError):
            run = ctx.obj if ctx is not None else None
            output_dir = None
            if run is not None and run._config is not None:
                output_dir = run._config.output_dir
            dump = _dump_nonfinite(e, output_dir)
            if dump is not None:
                logger.error(f"Diagnostic state written to {dump}")
        sys.exit(e.exit_code)
    sys.exit(0)


if __name__ == '__main__':
    main()
