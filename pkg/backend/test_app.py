"""
Tests for the Flask HTTP API
"""
import pytest

from app import API_MAX_REPS, app as flask_app

EX1 = [1, 2, -0.5, 0.3]
S = [[1, 2, 3, 4], [3, 4, 1, 2], [4, 3, 2, 1]]


@pytest.fixture
def client():
    flask_app.config['TESTING'] = True
    with flask_app.test_client() as client:
        yield client


def test_health(client):
    response = client.get('/api/health')
    assert response.status_code == 200
    body = response.get_json()
    assert body['status'] == 'healthy'
    assert body['limits']['api_max_reps'] == API_MAX_REPS
    assert response.headers['X-Request-ID']


def test_naive_test(client):
    response = client.post('/api/test', json={'x': EX1, 'stat': 'sum-first-k:2', 'method': 'naive-subset',
                                              'perms': S})
    assert response.status_code == 200
    body = response.get_json()
    assert body['p_value'] == 1 / 3
    assert 'warning' in body


def test_weighted_exhaustive_with_draws(client):
    response = client.post('/api/test', json={'x': EX1, 'stat': 'sum-first-k:2', 'method': 'exhaustive-q',
                                              'perms': S, 'weights': ['1', '2', '3'], 'seed': 4, 'draws': True})
    body = response.get_json()
    assert response.status_code == 200
    assert body['weight_total'] == 6.0
    assert len(body['draws']) == 1
    assert body['p_value'] in (1 / 6, 5 / 6, 2 / 3)


def test_covariate_statistic(client):
    response = client.post('/api/test', json={'x': [1, 2, 3, 4], 'y': [1, 3, 2, 4], 'stat': 'abs-corr',
                                              'method': 'naive', 'full': 4})
    assert response.status_code == 200
    assert response.get_json()['statistic_value'] == pytest.approx(0.8)


def test_bc_test(client):
    response = client.post('/api/test', json={'x': EX1, 'stat': 'sum-first-k:2', 'method': 'bc',
                                              'perms': S, 'M': 19, 's': 2, 'seed': 1})
    assert response.status_code == 200
    assert response.get_json()['method'] == 'besag-clifford'


def test_invalid_permutation_is_a_bad_request(client):
    response = client.post('/api/test', json={'x': EX1, 'stat': 'sum-first-k:2', 'method': 'naive',
                                              'perms': [[1, 2, 3, 4], [3, 3, 1, 2]]})
    assert response.status_code == 400
    assert 'not a bijection' in response.get_json()['error']


def test_missing_fields(client):
    assert client.post('/api/test', json={'stat': 'sum-first-k:2'}).status_code == 400
    assert client.post('/api/test', data='not json').status_code == 400
    response = client.post('/api/test', json={'x': EX1, 'stat': 'abs-corr', 'method': 'naive', 'perms': S})
    assert response.status_code == 400


def test_exact(client):
    response = client.post('/api/exact', json={'values': EX1, 'stat': 'sum-first-k:2',
                                               'method': 'corrected-subset', 'perms': S})
    assert response.status_code == 200
    body = response.get_json()
    assert body['atoms'] == {'1/3': '1/6', '2/3': '1/3', '1/1': '1/2'}
    assert body['audit']['passed'] is True


def test_exact_evalue_expectation(client):
    response = client.post('/api/exact', json={'values': [1, 1, 1], 'stat': 'sum-first-k:1',
                                               'method': 'evalue', 'full': 3, 'M': 1})
    assert response.status_code == 200
    body = response.get_json()
    assert body['expectation'] == '1/1'
    assert body['valid'] is True


def test_exact_over_capacity(client):
    response = client.post('/api/exact', json={'values': list(range(9)), 'stat': 'sum-first-k:1',
                                               'method': 'naive', 'full': 3})
    assert response.status_code in (400, 413)
    response = client.post('/api/exact', json={'values': EX1, 'stat': 'sum-first-k:2',
                                               'method': 'sampled', 'perms': S, 'M': 20})
    assert response.status_code == 413


def test_group(client):
    response = client.post('/api/group', json={'generators': [[2, 1, 4, 3], [3, 4, 1, 2]]})
    assert response.get_json() == {'order': 4, 'perms': [[1, 2, 3, 4], [2, 1, 4, 3], [3, 4, 1, 2], [4, 3, 2, 1]]}
    response = client.post('/api/group', json={'generators': [], 'n': 3})
    assert response.get_json()['perms'] == [[1, 2, 3]]
    response = client.post('/api/group', json={'generators': [[2, 1, 3, 4, 5], [2, 3, 4, 5, 1]], 'cap': 10})
    assert response.status_code == 413


def test_calibrate(client):
    response = client.post('/api/calibrate', json={'n': 4, 'stat': 'sum-first-k:2', 'method': 'naive',
                                                   'perms': S, 'reps': 500, 'seed': 3, 'alphas': ['1/3', 1]})
    assert response.status_code == 200
    body = response.get_json()
    assert [row['alpha'] for row in body['rows']] == [1 / 3, 1.0]
    assert body['flagged'] == [1 / 3]


def test_calibrate_rep_limit(client):
    response = client.post('/api/calibrate', json={'n': 4, 'stat': 'sum-first-k:2', 'method': 'naive',
                                                   'perms': S, 'reps': API_MAX_REPS + 1, 'seed': 3})
    assert response.status_code == 413


def test_calibrate_needs_seed(client, monkeypatch):
    monkeypatch.setattr('app.runner.default_seed', None)
    response = client.post('/api/calibrate', json={'n': 4, 'stat': 'sum-first-k:2', 'method': 'naive',
                                                   'perms': S, 'reps': 10})
    assert response.status_code == 400


def test_randomization_assignment(client):
    body = {'x': [1, 1, 0, 0], 'stat': 'sum-first-k:2', 'method': 'randomization', 'perms': S}
    response = client.post('/api/test', json={**body, 'assigned': [3, 4, 1, 2]})
    assert response.status_code == 200
    assert response.get_json()['p_value'] == 1.0
    for bad in ([3.9, 4, 1, 2], ['a', 'b', 'c', 'd'], []):
        response = client.post('/api/test', json={**body, 'assigned': bad})
        assert response.status_code == 400
        assert 'error' in response.get_json()
