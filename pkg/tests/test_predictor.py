import math

import pytest

from pednav.core import Action, Config, VehicleState
from pednav.predictor import (AvPose, ConstantVelocityPredictor,
                              GroundTruthPredictor, PedestrianHistory,
                              PredictorError, PredictorInput, PredictorOutput,
                              constant_velocity_predict, ground_truth_predict,
                              project_av, validate_output)
from pednav.scenario import PedestrianTrack, Scenario
from pednav.uncertainty import PredictedTrack, Gaussian2D


def make_input(histories, horizon=6, history=6, dt=0.5):
    poses = tuple(AvPose(px=0.0, py=0.0, theta=0.0, v=0.0)
                  for _ in range(history))
    proj = tuple((0.0, 0.0) for _ in range(horizon))
    return PredictorInput(t=history - 1, dt=dt, horizon=horizon,
                          history=history, av_history=poses,
                          av_projection=proj, peds=tuple(histories))


def walking_history(vx=1.0, vy=0.0, dt=0.5, history=6, pid="w"):
    points = tuple(((i - history + 1) * vx * dt, (i - history + 1) * vy * dt)
                   for i in range(history))
    return PedestrianHistory(id=pid, points=points)


def test_cv_extrapolates_linear_motion():
    inp = make_input([walking_history(vx=1.0, vy=-0.5)])
    out = constant_velocity_predict(inp)
    track = out.tracks[0]
    assert len(track.steps) == 6
    for k, g in enumerate(track.steps, start=1):
        assert g.mx == pytest.approx(1.0 * 0.5 * k, abs=1e-12)
        assert g.my == pytest.approx(-0.5 * 0.5 * k, abs=1e-12)


def test_cv_sigma_grows_linearly():
    inp = make_input([walking_history()])
    out = constant_velocity_predict(inp, sigma0=0.1, growth=0.05)
    sig = [math.sqrt(g.sxx) for g in out.tracks[0].steps]
    for k, s in enumerate(sig, start=1):
        assert s == pytest.approx(0.1 + 0.05 * k, abs=1e-12)
    assert all(g.sxy == 0.0 and g.sxx == g.syy for g in out.tracks[0].steps)


def test_cv_velocity_uses_actual_gap():
    # an occlusion gap between the last two sightings must not double speed
    points = (None, (0.0, 0.0), None, None, (1.5, 0.0), None)
    inp = make_input([PedestrianHistory(id="g", points=points)])
    out = constant_velocity_predict(inp)
    # 1.5 m over 3 frames at dt 0.5 -> 1 m/s; last seen 1 frame ago
    g1 = out.tracks[0].steps[0]
    assert g1.mx == pytest.approx(1.5 + 1.0 * 0.5 * (1 + 1), abs=1e-12)


def test_cv_single_sighting_holds_position():
    points = (None, None, None, None, None, (3.0, 4.0))
    inp = make_input([PedestrianHistory(id="s", points=points)])
    out = constant_velocity_predict(inp)
    assert all(g.mean == (3.0, 4.0) for g in out.tracks[0].steps)


def test_cv_empty_history_raises():
    inp = make_input([PedestrianHistory(id="e", points=(None,) * 6)])
    with pytest.raises(PredictorError, match="empty history"):
        constant_velocity_predict(inp)


def test_cv_parameter_validation():
    inp = make_input([walking_history()])
    with pytest.raises(ValueError):
        constant_velocity_predict(inp, sigma0=0.0)
    with pytest.raises(ValueError):
        constant_velocity_predict(inp, growth=-0.1)


def replay_scenario():
    ped = PedestrianTrack(id="a", radius=0.3, first_frame=0,
                          positions=((0.0, 5.0), (1.0, 5.0), (2.0, 5.0),
                                     (3.0, 5.0)))
    short = PedestrianTrack(id="b", radius=0.3, first_frame=0,
                            positions=((9.0, 1.0), (9.5, 1.0)))
    return Scenario(id="replay", fps=2.0,
                    ego_reference=tuple((0.5 * i, 0.0) for i in range(12)),
                    peds=(ped, short), time_budget=20.0)


def test_gt_reads_recorded_future():
    sc = replay_scenario()
    out = ground_truth_predict(sc, ["a"], t=0, horizon=3)
    means = [g.mean for g in out.tracks[0].steps]
    assert means == [(1.0, 5.0), (2.0, 5.0), (3.0, 5.0)]
    assert out.fallback_ids == ()


def test_gt_holds_last_position_past_track_end():
    sc = replay_scenario()
    out = ground_truth_predict(sc, ["a"], t=2, horizon=4)
    means = [g.mean for g in out.tracks[0].steps]
    assert means == [(3.0, 5.0), (3.0, 5.0), (3.0, 5.0), (3.0, 5.0)]


def test_gt_flags_fallback_when_no_future():
    sc = replay_scenario()
    out = ground_truth_predict(sc, ["b"], t=1, horizon=3)
    assert out.fallback_ids == ("b",)
    assert all(g.mean == (9.5, 1.0) for g in out.tracks[0].steps)


def test_gt_unknown_pedestrian():
    with pytest.raises(PredictorError):
        ground_truth_predict(replay_scenario(), ["zz"], t=0, horizon=3)


def test_project_av_holds_last_action():
    av = VehicleState(px=0.0, py=0.0, vx=2.0, vy=0.0, theta=0.0,
                      radius=1.0, v_pref=2.0, gx=10.0, gy=0.0)
    proj = project_av(av, Action(v=2.0, dtheta=0.0), horizon=3, dt=0.5)
    assert proj == ((1.0, 0.0), (2.0, 0.0), (3.0, 0.0))


def test_project_av_without_action_stays_put():
    av = VehicleState(px=1.0, py=2.0, vx=0.0, vy=0.0, theta=0.3,
                      radius=1.0, v_pref=2.0, gx=10.0, gy=0.0)
    proj = project_av(av, None, horizon=2, dt=0.5)
    assert proj == ((1.0, 2.0), (1.0, 2.0))


def test_validate_output_reorders_to_request():
    inp = make_input([walking_history(pid="a"), walking_history(pid="b")])
    steps = tuple(Gaussian2D.isotropic(0, 0, 1.0) for _ in range(6))
    out = PredictorOutput(tracks=(PredictedTrack("b", steps),
                                  PredictedTrack("a", steps)))
    fixed = validate_output(inp, out)
    assert [t.ped_id for t in fixed.tracks] == ["a", "b"]


def test_validate_output_rejects_wrong_ids_or_length():
    inp = make_input([walking_history(pid="a")])
    steps = tuple(Gaussian2D.isotropic(0, 0, 1.0) for _ in range(6))
    with pytest.raises(PredictorError):
        validate_output(inp, PredictorOutput(tracks=(PredictedTrack("x", steps),)))
    short = tuple(Gaussian2D.isotropic(0, 0, 1.0) for _ in range(3))
    with pytest.raises(PredictorError):
        validate_output(inp, PredictorOutput(tracks=(PredictedTrack("a", short),)))


def test_predictor_classes_share_function_behaviour():
    inp = make_input([walking_history()])
    direct = constant_velocity_predict(inp, sigma0=0.2, growth=0.0)
    via_class = ConstantVelocityPredictor(sigma0=0.2, growth=0.0).predict(inp)
    assert direct == via_class

    sc = replay_scenario()
    gt = GroundTruthPredictor(sc, sigma_gt=0.05)
    hist = PedestrianHistory(id="a", points=(None,) * 5 + ((1.0, 5.0),))
    inp2 = PredictorInput(t=1, dt=0.5, horizon=3, history=6,
                          av_history=tuple(AvPose(0, 0, 0, 0) for _ in range(6)),
                          av_projection=((0, 0),) * 3, peds=(hist,))
    assert gt.predict(inp2) == ground_truth_predict(sc, ["a"], t=1, horizon=3)


def test_predictor_input_validation():
    with pytest.raises(ValueError):
        make_input([PedestrianHistory(id="x", points=((0.0, 0.0),) * 3)])
