"""
Flask HTTP API for permkit: the same operations as the command-line tool,
with JSON in and JSON out
"""
import os
import uuid
from datetime import datetime

from flask import Flask, jsonify, request, g, has_request_context
from flask_cors import CORS
from dotenv import load_dotenv
import logging
import numpy as np

# Load environment variables
load_dotenv()

from services.errors import CapacityError, DomainError, PermkitError
from services.logging_config import configure_logging
from services.testing_engine import MethodSpec, parse_method
from services.calibration_service import CalibrationConfig, parse_alphas
from services.io_service import distribution_from_lists, perm_from_list, perms_from_lists
from services.oracle_service import ORACLE_MAX_N, ORACLE_MAX_TUPLES
from services.runner_service import ExactRequest, PermutationTestRunner, TestRequest, build_statistic

app = Flask(__name__)
CORS(app)


def _request_id() -> str:
    if has_request_context():
        return getattr(g, 'request_id', '-')
    return '-'


configure_logging(run_id_getter=_request_id)
logger = logging.getLogger(__name__)

API_MAX_REPS = int(os.getenv('API_MAX_REPS', 20_000))

runner = PermutationTestRunner()


@app.before_request
def add_request_id():
    g.request_id = str(uuid.uuid4())


@app.after_request
def add_request_id_header(response):
    response.headers['X-Request-ID'] = getattr(g, 'request_id', '-')
    return response


def _body() -> dict:
    body = request.get_json(silent=True)
    if not isinstance(body, dict):
        raise DomainError("request body must be a JSON object")
    return body


def _required(body: dict, key: str):
    if key not in body or body[key] is None:
        raise DomainError(f"missing field {key!r}")
    return body[key]


def _vector(body: dict, key: str, dtype=float):
    value = body.get(key)
    if value is None:
        return None
    try:
        return np.asarray(value, dtype=dtype)
    except (TypeError, ValueError):
        raise DomainError(f"field {key!r} must be a list of numbers")


def _int(body: dict, key: str, default=None):
    value = body.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise DomainError(f"field {key!r} must be an integer")
    return value


def _source(body: dict, n=None):
    """perms (+ weights) | generators | full | uniform_sn"""
    images = body.get('perms')
    weights = body.get('weights')
    if weights is not None and images is None:
        raise DomainError("weights need perms")
    _, source = runner.source(
        perms=perms_from_lists(images) if images is not None and weights is None else None,
        dist=distribution_from_lists(images, weights) if weights is not None else None,
        generators=perms_from_lists(body['generators']) if body.get('generators') is not None else None,
        full_n=_int(body, 'full'),
        uniform_sn=_int(body, 'uniform_sn'),
        n=n,
    )
    return source


def _statistic(body: dict, n: int):
    y = _vector(body, 'y')
    group = _vector(body, 'group', dtype=bool)
    for name, vec in (('y', y), ('group', group)):
        if vec is not None and vec.shape != (n,):
            raise DomainError(f"{name} must have length {n}")
    return build_statistic(str(_required(body, 'stat')), y=y, mask=group)


def _error_response(e: Exception, action: str):
    if isinstance(e, CapacityError):
        logger.error(f"{action} exceeded a capacity limit: {e}")
        return jsonify({'error': str(e)}), 413
    if isinstance(e, PermkitError):
        logger.error(f"{action} rejected: {e}")
        return jsonify({'error': str(e)}), 400
    logger.error(f"Error in {action}: {e}")
    return jsonify({'error': str(e)}), 500


@app.route('/api/health', methods=['GET'])
def health_check():
    """Health check endpoint"""
    return jsonify({
        'status': 'healthy',
        'timestamp': datetime.now().isoformat(),
        'limits': {
            'subgroup_cap': runner.subgroup_cap,
            'max_full_group_n': runner.max_full_n,
            'oracle_max_n': ORACLE_MAX_N,
            'oracle_max_tuples': ORACLE_MAX_TUPLES,
            'api_max_reps': API_MAX_REPS,
        }
    })


@app.route('/api/test', methods=['POST'])
def run_test():
    """One p-value or e-value; the response is the standard report"""
    try:
        body = _body()
        x = _vector(body, 'x')
        if x is None:
            raise DomainError("missing field 'x'")
        assigned = body.get('assigned')
        test_request = TestRequest(
            x=x,
            stat=_statistic(body, x.shape[0]),
            method=parse_method(str(_required(body, 'method'))),
            source=_source(body, n=x.shape[0]),
            M=_int(body, 'M', 0),
            steps=_int(body, 's', 1),
            seed=_int(body, 'seed'),
            assigned=perm_from_list(assigned) if assigned is not None else None,
        )
        report = runner.run_test(test_request)
        return jsonify(report.to_dict(include_draws=bool(body.get('draws', False))))
    except Exception as e:
        return _error_response(e, 'test')


@app.route('/api/exact', methods=['POST'])
def run_exact():
    """Exact law of a p-value with its validity audit"""
    try:
        body = _body()
        values = _vector(body, 'values')
        if values is None:
            raise DomainError("missing field 'values'")
        exact_request = ExactRequest(
            values=values,
            stat=_statistic(body, values.shape[0]),
            method=parse_method(str(_required(body, 'method'))),
            source=_source(body, n=values.shape[0]),
            M=_int(body, 'M', 0),
            steps=_int(body, 's', 1),
            brute_force=bool(body.get('brute_force', False)),
        )
        return jsonify(runner.run_exact(exact_request))
    except Exception as e:
        return _error_response(e, 'exact enumeration')


@app.route('/api/group', methods=['POST'])
def run_group():
    """Subgroup closure, lexicographic"""
    try:
        body = _body()
        generators = perms_from_lists(body.get('generators') or [])
        group = runner.run_group(generators, n=_int(body, 'n'), cap=_int(body, 'cap'))
        return jsonify({'order': len(group), 'perms': [list(p.image) for p in group]})
    except Exception as e:
        return _error_response(e, 'subgroup closure')


@app.route('/api/calibrate', methods=['POST'])
def run_calibrate():
    """Monte Carlo rejection rates; reps are capped by API_MAX_REPS"""
    try:
        body = _body()
        reps = _int(body, 'reps', 1000)
        if reps > API_MAX_REPS:
            raise CapacityError(f"reps={reps} exceeds the API limit of {API_MAX_REPS}")
        values = _vector(body, 'values')
        n = _int(body, 'n')
        if n is None:
            if values is None:
                raise DomainError("give n or values")
            n = values.shape[0]
        alphas = body.get('alphas', '0.05,0.1,1/3,0.5,1')
        if isinstance(alphas, list):
            alphas = ','.join(str(a) for a in alphas)
        sampler = str(body.get('sampler', 'gaussian'))
        config = CalibrationConfig(
            spec=MethodSpec(parse_method(str(_required(body, 'method'))), _source(body, n=n),
                            M=_int(body, 'M', 0), steps=_int(body, 's', 1)),
            stat=_statistic(body, n),
            n=n,
            sampler=sampler,
            values=tuple(values.tolist()) if values is not None and sampler == 'values' else None,
            alphas=parse_alphas(str(alphas)),
            reps=reps,
        )
        curve = runner.run_calibrate(config, _int(body, 'seed'), workers=1)
        return jsonify(curve.to_dict())
    except Exception as e:
        return _error_response(e, 'calibration')


if __name__ == '__main__':
    port = int(os.getenv('PORT', 5000))
    debug = os.getenv('FLASK_ENV') == 'development'

    logger.info(f"Starting permkit API on port {port}")
    app.run(host='0.0.0.0', port=port, debug=debug)
