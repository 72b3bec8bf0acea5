import json

import pytest

from conftest import small_instance
from pararoute.heuristics import nearest_neighbor_routes
from pararoute.instance import InstanceParseError
from pararoute.milp import Routes
from pararoute.solution import read_solution, write_solution


def test_round_trip_revalidates(tmp_path):
    inst = small_instance(9, 4, 2)
    routes = nearest_neighbor_routes(inst)
    write_solution(tmp_path / "s.json", inst, routes, {"nodes_explored": 3})
    back, data = read_solution(tmp_path / "s.json", inst)
    assert back == routes
    assert data["stats"] == {"nodes_explored": 3}


def test_infeasible_file_rejected(tmp_path):
    inst = small_instance(5, 5, 1, mode="unit")
    bad = Routes.from_paths(inst, [[0, 1, 2, inst.end]])
    write_solution(tmp_path / "s.json", inst, bad)
    with pytest.raises(InstanceParseError, match="visit-once"):
        read_solution(tmp_path / "s.json", inst)
    routes, _ = read_solution(tmp_path / "s.json")
    assert routes.paths == bad.paths


def test_malformed(tmp_path):
    (tmp_path / "s.json").write_text(json.dumps({"objective": 1.0}))
    with pytest.raises(InstanceParseError, match="routes"):
        read_solution(tmp_path / "s.json")
    (tmp_path / "s.json").write_text("{")
    with pytest.raises(InstanceParseError, match="line 1"):
        read_solution(tmp_path / "s.json")
