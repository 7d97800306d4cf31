"""Smoke test for the urban_abe extension. Run with pytest or directly."""

import csv
import io
import json

import urban_abe


def test_segment_tree_reps():
    assert urban_abe.point_rep(4, 3) == ["n0_0", "n1_1", "l3"]
    assert urban_abe.interval_rep(8, 1, 8) == ["n0_0"]
    point = set(urban_abe.point_rep(16, 7))
    assert len(point & set(urban_abe.interval_rep(16, 5, 12))) == 1
    assert not point & set(urban_abe.interval_rep(16, 8, 12))


def test_bad_arguments_raise():
    for call in (lambda: urban_abe.point_rep(4, 9), lambda: urban_abe.interval_rep(4, 3, 1)):
        try:
            call()
        except ValueError:
            continue
        raise AssertionError("expected ValueError")


def test_toy_city_round_trip_and_revocation():
    city = urban_abe.ToyCity(seed=7)
    assert city.device_ids() == list(range(1, 13))
    alice = city.add_user([(1, 1, 4)], 1, 30)
    bob = city.add_user([(1, 1, 4)], 1, 30)
    assert city.seal_day() == 12
    item = city.produce(1, b"14 vehicles/min")
    assert city.consume(alice, item) == b"14 vehicles/min"
    assert city.consume(bob, item) == b"14 vehicles/min"
    assert city.consume(alice, city.produce(2, b"elsewhere")) is None
    city.revoke(bob)
    later = city.produce(1, b"9 vehicles/min")
    assert city.consume(bob, later) is None
    assert city.consume(bob, item) is None
    assert city.consume(alice, later) == b"9 vehicles/min"
    city.audit()


def test_experiment_csv_is_deterministic():
    cfg = json.dumps({
        "city": {"type": "grid", "blocks_x": 2, "blocks_y": 2,
                 "block_length": 100.0, "segment_length": 25.0},
        "representations": [{"kind": "basic"}, {"kind": "segment_tree"}],
        "route_lengths_m": [100.0],
        "users": 12,
        "subscription_days": 5,
        "lifetime_days": 30,
        "devices": 4,
    })
    text = urban_abe.run_experiment(cfg, seed=2)
    assert text == urban_abe.run_experiment(cfg, seed=2)
    lines = text.splitlines()
    assert lines[0].startswith("# urban-abe metrics")
    rows = list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))
    assert [r["representation"] for r in rows] == ["basic", "segtree"]
    assert all(r["seed"] == "2" for r in rows)


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print(f"{name}: ok")
