"""Command-line surface: one flask subcommand per pipeline stage."""
import json
import logging

import click
from flask import current_app
from flask.cli import with_appcontext

from app.exceptions import ConfigurationError, NumericalError, ValidationError

from .service import load_config, run_command, write_outputs


LOGGER = logging.getLogger(__name__)
EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _parse_range(ctx, param, value):
    if value is None:
        return None
    try:
        parts = [int(part) for part in value.split(':')]
    except ValueError:
        raise click.BadParameter('expected LO:HI or M')
    if len(parts) == 1:
        return (parts[0], parts[0])
    if len(parts) != 2:
        raise click.BadParameter('expected LO:HI or M')
    return tuple(parts)


def _parse_floats(ctx, param, value):
    if not value:
        return ()
    try:
        return tuple(float(part) for part in value.split(','))
    except ValueError:
        raise click.BadParameter('expected comma-separated numbers')


def _parse_ints(ctx, param, value):
    if not value:
        return ()
    try:
        return tuple(int(part) for part in value.split(','))
    except ValueError:
        raise click.BadParameter('expected comma-separated integers')


def _parse_points(ctx, param, value):
    points = []
    for item in value or ():
        try:
            coordinates = tuple(float(part) for part in item.split(','))
        except ValueError:
            raise click.BadParameter(f'bad point {item!r}')
        if len(coordinates) != 3:
            raise click.BadParameter(f'point {item!r} needs x1,x2,x3')
        points.append(coordinates)
    return tuple(points)


def common_options(function):
    options = [
        click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None,
                     help='JSON run configuration.'),
        click.option('--l', 'l', type=float, default=None, help='Slab thickness.'),
        click.option('--h', 'h', type=float, default=None, help='Aperture scale.'),
        click.option('--modes', 'M', type=int, default=None, help='Waveguide modes per hole.'),
        click.option('--parity', type=click.Choice(['even', 'odd', 'both']), default=None),
        click.option('--m-range', 'm_range', callback=_parse_range, default=None,
                     help='Resonance indices as LO:HI.'),
        click.option('--quad-order', 'quad_order', type=int, default=None),
        click.option('--quad-levels', 'quad_levels', type=int, default=None),
        click.option('--tol-quad', 'tol_quad', type=float, default=None),
        click.option('--threads', type=int, default=None),
        click.option('--json-out', 'json_out', type=click.Path(dir_okay=False), default=None),
        click.option('--csv-out', 'csv_out', type=click.Path(dir_okay=False), default=None),
    ]
    for option in reversed(options):
        function = option(function)
    return function


def execute(command, config_path, **overrides):
    """Load, run and write one command; returns the process exit code."""
    try:
        run_config = load_config(config_path, dict(overrides, command=command), current_app.config)
        document = run_command(run_config, current_app.config)
        write_outputs(document, run_config.json_out, run_config.csv_out)
    except ConfigurationError as exc:
        field = f' [{exc.field}]' if exc.field else ''
        click.echo(f'error{field}: {exc}', err=True)
        return EXIT_VALIDATION
    except ValidationError as exc:
        click.echo(f'error: {exc}', err=True)
        return EXIT_VALIDATION
    except NumericalError as exc:
        click.echo(f'numerical error ({type(exc).__name__}): {exc}', err=True)
        return EXIT_NUMERICAL
    except OSError as exc:
        click.echo(f'error [output]: {exc}', err=True)
        return EXIT_VALIDATION
    if not run_config.json_out:
        click.echo(json.dumps(document.to_dict(), indent=2, sort_keys=True))
    if command == 'verify' and not document.payload['passed']:
        failed = [check['name'] for check in document.payload['checks'] if not check['passed']]
        click.echo(f'verify failed: {", ".join(failed)}', err=True)
        return EXIT_VERIFY_FAILED
    return EXIT_OK


@click.command('eigen')
@common_options
@with_appcontext
def eigen_command(config_path, **options):
    """Eigenvalues and quadrature of each hole shape."""
    raise SystemExit(execute('eigen', config_path, **options))


@click.command('gram')
@common_options
@click.option('--m-list', 'M_list', callback=_parse_ints, default=None,
              help='Comma-separated truncations for the convergence report.')
@with_appcontext
def gram_command(config_path, **options):
    """Single-hole Gram matrices and shape constants."""
    raise SystemExit(execute('gram', config_path, **options))


@click.command('det')
@common_options
@click.option('--re', 're_axis', default=None, help='Real axis as LO,HI,COUNT.')
@click.option('--im', 'im_axis', default=None, help='Imaginary axis as LO,HI,COUNT.')
@with_appcontext
def det_command(config_path, re_axis, im_axis, **options):
    """|det| and smallest singular value of the reduced matrix on a k grid."""
    if re_axis or im_axis:
        if not (re_axis and im_axis):
            raise click.BadParameter('--re and --im go together')
        options['k_grid'] = {
            're': _parse_floats(None, None, re_axis),
            'im': _parse_floats(None, None, im_axis),
        }
    raise SystemExit(execute('det', config_path, **options))


@click.command('solve')
@common_options
@with_appcontext
def solve_command(config_path, **options):
    """Resonances by Newton's method from the asymptotic seeds."""
    raise SystemExit(execute('solve', config_path, **options))


@click.command('asym')
@common_options
@with_appcontext
def asym_command(config_path, **options):
    """Closed-form resonance predictions."""
    raise SystemExit(execute('asym', config_path, **options))


@click.command('field')
@common_options
@click.option('--k0', type=float, default=None, help='Incident wavenumber; the resonance if omitted.')
@click.option('--point', 'points', multiple=True, callback=_parse_points, help='Sample point x1,x2,x3.')
@click.option('--profile', type=click.Choice(['axis']), default=None)
@click.option('--h-values', 'h_values', callback=_parse_floats, default=None,
              help='Decreasing h values for the enhancement fit.')
@with_appcontext
def field_command(config_path, **options):
    """Field inside the holes under normal incidence."""
    raise SystemExit(execute('field', config_path, **options))


@click.command('sweep')
@common_options
@click.option('--h-values', 'h_values', callback=_parse_floats, default=None)
@with_appcontext
def sweep_command(config_path, **options):
    """Direct against asymptotic resonances over a range of h."""
    raise SystemExit(execute('sweep', config_path, **options))


@click.command('verify')
@common_options
@with_appcontext
def verify_command(config_path, **options):
    """Structural checks of every stage; exit code 1 when any fails."""
    raise SystemExit(execute('verify', config_path, **options))


COMMANDS = (
    eigen_command, gram_command, det_command, solve_command,
    asym_command, field_command, sweep_command, verify_command,
)


def register_commands(app):
    for command in COMMANDS:
        app.cli.add_command(command)
