"""
Unit tests for simulated worlds and the skill wire protocol
"""

import asyncio

import pytest
from scipy import stats

from am_runtime import ActivationRequest, build_activation
from config import Settings
from errors import ConnectionLost, LinkError, ProtocolViolation, SkillTimeout, UnknownEndpoint
from harness import (
    InProcessChannel,
    WireMessage,
    WorldSimulator,
    connect,
    decode_message,
    encode_message,
    serve,
    synthesize_response,
)
from tests.conftest import toy_nav_state


def request_for(project, label):
    action = project.action(label)
    return build_activation(project.skills[action.skill].map, action)


class TestWorldSimulator:
    """Ground truth held by in-process worlds"""

    def test_faithful_step_advances_state(self, toy_nav):
        world = WorldSimulator(toy_nav, seed=3, initial_state=toy_nav_state(toy_nav, 1, v1=True))
        result = world.execute(toy_nav.action("navigate(loc3)"))
        assert world.state == result.next_state
        assert world.last is result
        assert result.next_state.get(toy_nav.state, "robotLocation.discrete") in (-1, 3)

    def test_unknown_world(self, toy_nav):
        with pytest.raises(LinkError) as exc:
            WorldSimulator(toy_nav, world="moon")
        assert exc.value.kind == "ManifestError"

    def test_faithful_without_manifest_entry(self, turtlebot9):
        world = WorldSimulator(turtlebot9, world="faithful")
        assert world.spec.mode == "faithful"
        assert world.overrides == {}

    def test_custom_world_overrides_dynamics(self, toy_nav):
        start = toy_nav_state(toy_nav, 1, v1=True)
        action = toy_nav.action("navigate(loc2)")
        world = WorldSimulator(toy_nav, world="slippery", seed=9, initial_state=start)
        n = 2000
        results = []
        for _ in range(n):
            world.state, world.terminal = start, False
            results.append(world.execute(action))
        successes = sum(r.observation == "eSuccess" for r in results)
        assert stats.binomtest(successes, n, 0.5).pvalue > 0.001
        assert {r.reward for r in results} <= {-100.0, -10.0}
        for r in results:
            loc = r.next_state.get(toy_nav.state, "robotLocation.discrete")
            assert loc == (2 if r.observation == "eSuccess" else -1)

    def test_custom_world_falls_through_to_model(self, toy_nav):
        # no override row matches navigating to the current location
        start = toy_nav_state(toy_nav, 1, v1=True)
        world = WorldSimulator(toy_nav, world="slippery", seed=4, initial_state=start)
        result = world.execute(toy_nav.action("navigate(loc1)"))
        assert not result.met_precondition
        assert result.reward == -20.0

    def test_decode(self, toy_nav):
        world = WorldSimulator(toy_nav)
        assert world.decode(request_for(toy_nav, "navigate(loc2)")).label == "navigate(loc2)"
        with pytest.raises(UnknownEndpoint):
            world.decode(ActivationRequest("fly", ()))
        with pytest.raises(ProtocolViolation):
            world.decode(ActivationRequest("navigate", (("goal.x", 1.0),)))

    def test_invoke_attaches_world_report(self, toy_nav):
        world = WorldSimulator(toy_nav, world="slippery", seed=2, initial_state=toy_nav_state(toy_nav, 1, v1=True))
        response, feeds = world.invoke(request_for(toy_nav, "navigate(loc3)"))
        assert response.world.reward == world.last.reward
        assert response.world.terminal == world.last.terminal
        assert response.world.flagged
        assert response.fields["success"] is (world.last.observation == "eSuccess")
        assert len(feeds) == 2


class TestSynthesizeResponse:
    def test_fields_and_feeds(self, toy_nav):
        response, feeds = synthesize_response(toy_nav, "navigate", "eSuccess")
        assert response.fields == {"success": True}
        assert feeds.payloads("/navigation/planner_output") == ["planning", "plan success"]
        assert [seq for seq, _ in feeds.messages["/navigation/planner_output"]] == [1, 2]

    def test_feed_only_entry(self, pick_finer):
        response, feeds = synthesize_response(pick_finer, "detect_hold_can", "eCanNotHeld")
        assert response.fields == {}
        assert feeds.as_dict() == {"/gripper/pressure": [0.1]}

    def test_unconfigured_observation(self, toy_nav):
        response, feeds = synthesize_response(toy_nav, "navigate", "eDone")
        assert response.fields == {}
        assert len(feeds) == 0


class TestWireMessage:
    """Line-delimited JSON messages"""

    def test_encode_is_one_line(self):
        line = encode_message(WireMessage(kind="activate", id=1, endpoint="navigate", fields={"goal.x": 1.0}))
        assert line.endswith(b"\n")
        assert line.count(b"\n") == 1
        decoded = decode_message(line)
        assert decoded.endpoint == "navigate"
        assert decoded.fields == {"goal.x": 1.0}

    def test_response_defaults_fields(self):
        assert decode_message(b'{"kind": "response", "id": 4}').fields == {}

    @pytest.mark.parametrize("line", [
        b"not json\n",
        b'{"kind": "activate", "id": 1}\n',
        b'{"kind": "feed", "id": 1, "path": "/a"}\n',
        b'{"kind": "cancel", "id": 1}\n',
        b'{"kind": "reset", "id": 1}\n',
        b'{"kind": "response", "id": 1, "extra": 2}\n',
        b"\xff\xfe\n",
    ])
    def test_malformed(self, line):
        with pytest.raises(ProtocolViolation):
            decode_message(line)


async def _start_stub(handler):
    server = await asyncio.start_server(handler, "127.0.0.1", 0)
    return server, server.sockets[0].getsockname()[1]


@pytest.mark.wire
class TestWireChannel:
    """Client and server over local sockets"""

    async def test_remote_matches_in_process(self, toy_nav):
        start = toy_nav_state(toy_nav, 1, v1=True)
        local = InProcessChannel(WorldSimulator(toy_nav, seed=17, initial_state=start))
        server = await serve(WorldSimulator(toy_nav, seed=17, initial_state=start), port=0)
        port = server.sockets[0].getsockname()[1]
        remote = await connect("127.0.0.1", port, timeout=5.0)
        try:
            for label in ("navigate(loc2)", "navigate(loc3)", "navigate(loc1)"):
                request = request_for(toy_nav, label)
                expected_response, expected_feeds = await local.activate(request)
                response, feeds = await remote.activate(request)
                assert response.fields == expected_response.fields
                assert feeds.as_dict() == expected_feeds.as_dict()
                assert response.world == expected_response.world
        finally:
            await remote.close()
            server.close()
            await server.wait_closed()

    async def test_each_connection_starts_fresh(self, toy_nav):
        server = await serve(WorldSimulator(toy_nav, seed=5, initial_state=toy_nav_state(toy_nav, 1, v1=True)), port=0)
        port = server.sockets[0].getsockname()[1]
        try:
            reports = []
            for _ in range(2):
                remote = await connect("127.0.0.1", port, timeout=5.0)
                try:
                    response, _ = await remote.activate(request_for(toy_nav, "navigate(loc2)"))
                    reports.append(response.world)
                finally:
                    await remote.close()
            assert reports[0] == reports[1]
        finally:
            server.close()
            await server.wait_closed()

    async def test_reset_reseeds_ground_truth(self, toy_nav):
        local = InProcessChannel(WorldSimulator(toy_nav, seed=0))
        server = await serve(WorldSimulator(toy_nav, seed=0), port=0)
        port = server.sockets[0].getsockname()[1]
        remote = await connect("127.0.0.1", port, timeout=5.0)
        try:
            for seed in (3, 8):
                await local.reset(seed)
                await remote.reset(seed)
                assert local.world.seed == seed
                for label in ("navigate(loc1)", "navigate(loc2)"):
                    request = request_for(toy_nav, label)
                    expected, _ = await local.activate(request)
                    response, _ = await remote.activate(request)
                    assert response.fields == expected.fields
                    assert response.world == expected.world
        finally:
            await remote.close()
            server.close()
            await server.wait_closed()

    async def test_server_drops_unknown_endpoint(self, toy_nav):
        server = await serve(WorldSimulator(toy_nav), port=0)
        port = server.sockets[0].getsockname()[1]
        remote = await connect("127.0.0.1", port, timeout=5.0)
        try:
            with pytest.raises(ConnectionLost):
                await remote.activate(ActivationRequest("fly", ()))
        finally:
            await remote.close()
            server.close()
            await server.wait_closed()

    async def test_timeout(self):
        async def silent(reader, writer):
            await reader.readline()
            await asyncio.sleep(1)
            writer.close()

        server, port = await _start_stub(silent)
        remote = await connect("127.0.0.1", port, timeout=0.2)
        try:
            with pytest.raises(SkillTimeout):
                await remote.activate(ActivationRequest("navigate", ()))
        finally:
            await remote.close()
            server.close()

    async def test_timeout_default_follows_current_settings(self, mocker):
        async def silent(reader, writer):
            await reader.readline()
            await asyncio.sleep(1)
            writer.close()

        mocker.patch("config.settings", Settings(_env_file=None, wire_timeout_seconds=0.2))
        server, port = await _start_stub(silent)
        remote = await connect("127.0.0.1", port)
        try:
            assert remote.timeout == 0.2
            with pytest.raises(SkillTimeout):
                await remote.activate(ActivationRequest("navigate", ()))
        finally:
            await remote.close()
            server.close()

    async def test_reply_for_unknown_activation(self):
        async def confused(reader, writer):
            await reader.readline()
            writer.write(encode_message(WireMessage(kind="response", id=99)))
            await writer.drain()

        server, port = await _start_stub(confused)
        remote = await connect("127.0.0.1", port, timeout=2.0)
        try:
            with pytest.raises(ProtocolViolation):
                await remote.activate(ActivationRequest("navigate", ()))
        finally:
            await remote.close()
            server.close()

    async def test_feed_sequence_must_increase(self):
        async def stuttering(reader, writer):
            await reader.readline()
            for _ in range(2):
                writer.write(encode_message(WireMessage(kind="feed", id=1, path="/a", seq=1, payload="x")))
            await writer.drain()

        server, port = await _start_stub(stuttering)
        remote = await connect("127.0.0.1", port, timeout=2.0)
        try:
            with pytest.raises(ProtocolViolation):
                await remote.activate(ActivationRequest("navigate", ()))
        finally:
            await remote.close()
            server.close()

    async def test_connection_refused(self):
        server, port = await _start_stub(lambda r, w: w.close())
        server.close()
        await server.wait_closed()
        with pytest.raises(ConnectionLost):
            await connect("127.0.0.1", port)
