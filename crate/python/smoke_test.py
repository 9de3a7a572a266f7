"""Smoke test for the advrate_py extension module."""

import json
import pathlib

import advrate_py

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"


def load(name):
    return json.loads((FIXTURES / name).read_text())


def main():
    fig1 = advrate_py.Network.load(str(FIXTURES / "fig1_net.json"))
    assert fig1.forward([2.0, -1.0]) == [11.0]
    fig2 = advrate_py.Network.load(str(FIXTURES / "fig2_net.json"))
    assert fig2.propagate([(0.0, 1.0), (0.0, 1.0)]) == [(-5.0, 9.0)]

    sat = advrate_py.decide(fig1, load("fig1_query.json"), epsilon=1 / 256)[0]
    assert sat["verdict"] == "SAT" and fig1.forward(sat["witness"])[0] >= 10.0, sat
    unsat = advrate_py.decide(fig2, load("fig2_query.json"))[0]
    assert unsat["verdict"] == "UNSAT", unsat

    ident = advrate_py.Network.from_json((FIXTURES / "identity_net.json").read_text())
    query = load("identity_query.json")
    rate = advrate_py.adversarial_rate(ident, query, epsilon=1 / 1024)[0]
    assert abs(rate["adversarial_rate"] - 0.5) < 2e-3, rate
    est = advrate_py.estimate_rate(ident, query, {"splits": 3, "trials": 5, "seed": 1})[0]
    assert 0.25 <= est["median_rate"] <= 1.0, est

    family = advrate_py.jumping_world_properties()
    assert len(family["properties"]) > 0
    ckpts = advrate_py.train({"episodes": 8, "checkpoint_every": 4, "hidden_sizes": [4]})
    net, meta = ckpts[-1]
    assert meta["episode_index"] == 8 and net.input_dim == len(family["properties"][0]["pre"])
    print("advrate_py smoke test passed:", repr(net))


if __name__ == "__main__":
    main()
