"""
Unit tests for the abstraction-map runtime
"""

import pytest

from am_runtime import ActivationRequest, FeedLog, SkillResponse, bind_locals, build_activation, derive_observation, observe
from errors import EvalFault, MissingParameter, MissingResponseField, ProtocolViolation

PLANNER_FEED = "/navigation/planner_output"


def feeds_of(path, *payloads):
    log = FeedLog()
    for seq, payload in enumerate(payloads, start=1):
        log.append(path, seq, payload)
    return log


class TestFeedLog:
    def test_append_in_order(self):
        log = feeds_of("/a", "x", "y")
        log.append("/b", 1, 3)
        assert log.payloads("/a") == ["x", "y"]
        assert log.payloads("/missing") == []
        assert len(log) == 3
        assert log.as_dict() == {"/a": ["x", "y"], "/b": [3]}

    def test_sequence_must_increase(self):
        log = feeds_of("/a", "x")
        with pytest.raises(ProtocolViolation):
            log.append("/a", 1, "again")


class TestActivation:
    def test_navigate_fields(self, toy_nav):
        am = toy_nav.skills["navigate"].map
        request = build_activation(am, toy_nav.action("navigate(loc2)"))
        assert request == ActivationRequest("navigate", (("goal.x", 10.0), ("goal.y", 0.0), ("goal.z", 0.0)))
        assert request.as_dict()["goal.x"] == 10.0

    def test_turtlebot_endpoint(self, turtlebot9):
        am = turtlebot9.skills["navigate"].map
        action = turtlebot9.skill_actions("navigate")[4]
        request = build_activation(am, action)
        assert request.endpoint == "move_base"
        assert [name for name, _ in request.fields] == ["goal.x", "goal.y"]

    def test_fieldless_endpoint(self, pick_finer):
        am = pick_finer.skills["detect_hold_can"].map
        request = build_activation(am, pick_finer.skill_actions("detect_hold_can")[0])
        assert request.endpoint == "detect_hold_can"
        assert request.fields == ()

    def test_action_of_another_skill(self, pick_finer):
        am = pick_finer.skills["navigate"].map
        with pytest.raises(MissingParameter):
            build_activation(am, pick_finer.skill_actions("pick")[0])


class TestObservation:
    """Response rules over bound locals"""

    @pytest.fixture
    def nav(self, toy_nav):
        return toy_nav.skills["navigate"].map, toy_nav.action("navigate(loc3)")

    def test_success_needs_flag_and_plan_message(self, nav):
        am, action = nav
        observation, env = observe(am, action, SkillResponse({"success": True}),
                                   feeds_of(PLANNER_FEED, "planning", "plan success"))
        assert observation == "eSuccess"
        assert env["skillSuccess"] is True
        assert env["planSuccess"] is True
        assert env["nav_to_x"] == 5.0

    def test_plan_message_missing(self, nav):
        am, action = nav
        observation, env = observe(am, action, SkillResponse({"success": True}), feeds_of(PLANNER_FEED, "planning"))
        assert observation == "eFailed"
        assert env["planSuccess"] is False

    def test_no_feed_messages_keeps_initial_value(self, nav):
        am, action = nav
        observation, env = observe(am, action, SkillResponse({"success": True}), FeedLog())
        assert observation == "eFailed"
        assert env["planSuccess"] is False

    def test_feed_fold_is_sticky(self, nav):
        am, action = nav
        env = bind_locals(am, SkillResponse({"success": True}),
                          feeds_of(PLANNER_FEED, "plan success", "plan failed"), action)
        assert env["planSuccess"] is True

    def test_flag_false(self, nav):
        am, action = nav
        observation, _ = observe(am, action, SkillResponse({"success": False}),
                                 feeds_of(PLANNER_FEED, "plan success"))
        assert observation == "eFailed"

    def test_missing_response_field(self, nav):
        am, action = nav
        with pytest.raises(MissingResponseField):
            observe(am, action, SkillResponse({"status": "ok"}), FeedLog())

    def test_response_field_of_wrong_type(self, nav):
        am, action = nav
        with pytest.raises(EvalFault):
            observe(am, action, SkillResponse({"success": "yes"}), FeedLog())

    def test_non_string_feed_payload(self, nav):
        am, action = nav
        with pytest.raises(EvalFault):
            observe(am, action, SkillResponse({"success": True}), feeds_of(PLANNER_FEED, 42))

    def test_nested_response_field(self, turtlebot9):
        am = turtlebot9.skills["navigate"].map
        action = turtlebot9.skill_actions("navigate")[0]
        assert observe(am, action, SkillResponse({"status": "SUCCEEDED"}), FeedLog())[0] == "eSuccess"
        assert observe(am, action, SkillResponse({"status": "ABORTED"}), FeedLog())[0] == "eFailed"

    def test_pressure_feed_takes_maximum(self, pick_finer):
        am = pick_finer.skills["detect_hold_can"].map
        action = pick_finer.skill_actions("detect_hold_can")[0]
        observation, env = observe(am, action, SkillResponse(), feeds_of("/gripper/pressure", 0.2, 0.7, 0.1))
        assert observation == "eCanHeld"
        assert env["pressure"] == 0.7
        assert observe(am, action, SkillResponse(), FeedLog())[0] == "eCanNotHeld"

    def test_integer_payload_widens(self, pick_finer):
        am = pick_finer.skills["detect_hold_can"].map
        action = pick_finer.skill_actions("detect_hold_can")[0]
        _, env = observe(am, action, SkillResponse(), feeds_of("/gripper/pressure", 1))
        assert env["pressure"] == 1.0
        assert isinstance(env["pressure"], float)

    def test_catch_all_rule(self, nav):
        am, action = nav
        assert derive_observation(am, {"skillSuccess": False, "planSuccess": True}, action) == "eFailed"
