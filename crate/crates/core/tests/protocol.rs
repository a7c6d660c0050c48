use std::io::Read;
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use davnav::config::RunConfig;
use davnav::engine::{ActionMode, Decision, EpisodeLog, Outcome, RawAction};
use davnav::protocol::{
    play, Agent, AgentError, Connection, EpisodeStart, GreedyAgent, Message, Percept, ProtocolError, RandomAgent,
    RemoteAgent, PROTOCOL_VERSION,
};
use davnav::suite::{generate_suite, greedy_params, run_one, run_suite, AgentSpec, BenchmarkSuite, World};

const TIMEOUT: Option<Duration> = Some(Duration::from_secs(20));

fn small_suite(mode: &str) -> (BenchmarkSuite, World) {
    let toml = format!(
        "version = 1\nname = \"proto\"\nseed = 4\nepisodes = 6\nmode = \"{mode}\"\n[maps]\ncount = 2\n[sounds]\ncount = 12\n"
    );
    let cfg = RunConfig::from_toml(&toml).unwrap();
    let world = World::build(&cfg).unwrap();
    (generate_suite(&cfg, &world).unwrap(), world)
}

/// Runs the suite against an agent served over loopback TCP from another
/// thread.
fn run_over_tcp(suite: &BenchmarkSuite, world: &World, mut agent: Box<dyn Agent>) -> Vec<EpisodeLog> {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let player = thread::spawn(move || {
        let mut conn = Connection::connect(addr, TIMEOUT).unwrap();
        play(&mut conn, agent.as_mut()).unwrap()
    });
    let mut remote = RemoteAgent::handshake(Connection::accept(&listener, TIMEOUT).unwrap()).unwrap();
    let logs: Vec<EpisodeLog> = suite
        .episodes
        .iter()
        .map(|ep| run_one(world, ep, &mut remote).unwrap())
        .collect();
    remote.shutdown().unwrap();
    let ends = player.join().unwrap();
    assert_eq!(ends.len(), suite.episodes.len());
    for (end, log) in ends.iter().zip(&logs) {
        assert_eq!(end.outcome, log.outcome);
    }
    logs
}

fn jsonl(logs: &[EpisodeLog]) -> Vec<String> {
    logs.iter().map(|l| l.to_jsonl()).collect()
}

#[test]
fn remote_greedy_matches_in_process() {
    let (suite, world) = small_suite("raw");
    let local = run_suite(&suite, &world, &AgentSpec::Greedy, None).unwrap();
    let params = greedy_params(&world, &suite.episodes[0].config).unwrap();
    let remote = run_over_tcp(&suite, &world, Box::new(GreedyAgent::new(params)));
    assert_eq!(jsonl(&remote), jsonl(&local));
}

#[test]
fn remote_random_matches_in_process_in_waypoint_mode() {
    let (suite, world) = small_suite("waypoint");
    let local = run_suite(&suite, &world, &AgentSpec::Random(11), None).unwrap();
    let remote = run_over_tcp(&suite, &world, Box::new(RandomAgent::new(11)));
    assert_eq!(jsonl(&remote), jsonl(&local));
    assert!(local.iter().all(|l| l.config.mode == ActionMode::Waypoint));
}

#[test]
fn out_of_range_waypoint_aborts_the_episode() {
    let (suite, world) = small_suite("waypoint");
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let player = thread::spawn(move || {
        let mut conn = Connection::connect(addr, TIMEOUT).unwrap();
        conn.send(Message::Hello {
            agent_name: "bad".into(),
        })
        .unwrap();
        assert!(matches!(conn.recv().unwrap(), Message::Hello { .. }));
        assert!(matches!(conn.recv().unwrap(), Message::EpisodeStart(_)));
        assert!(matches!(conn.recv().unwrap(), Message::Observation(_)));
        conn.send(Message::Action {
            action: Decision::Waypoint(9),
        })
        .unwrap();
        let Message::Error { message } = conn.recv().unwrap() else {
            panic!("expected an error")
        };
        let Message::EpisodeEnd(end) = conn.recv().unwrap() else {
            panic!("expected episode_end")
        };
        assert!(matches!(conn.recv().unwrap(), Message::Shutdown));
        (message, end.outcome)
    });
    let mut remote = RemoteAgent::handshake(Connection::accept(&listener, TIMEOUT).unwrap()).unwrap();
    let log = run_one(&world, &suite.episodes[0], &mut remote).unwrap();
    remote.shutdown().unwrap();
    let (message, outcome) = player.join().unwrap();
    assert!(message.contains("index out of range"), "{message}");
    assert_eq!(outcome, Outcome::FailureAborted);
    assert_eq!(log.outcome, Outcome::FailureAborted);
    assert!(log.records.is_empty());
}

#[test]
fn version_mismatch_is_rejected_at_hello() {
    use std::io::{BufRead, BufReader, Write};
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let client = thread::spawn(move || {
        let mut stream = std::net::TcpStream::connect(addr).unwrap();
        let line = format!(
            "{{\"protocol_version\":{},\"kind\":\"hello\",\"agent_name\":\"future\"}}\n",
            PROTOCOL_VERSION + 1
        );
        stream.write_all(line.as_bytes()).unwrap();
        let mut reply = String::new();
        BufReader::new(stream).read_line(&mut reply).unwrap();
        reply
    });
    let err = RemoteAgent::handshake(Connection::accept(&listener, TIMEOUT).unwrap())
        .err()
        .unwrap();
    assert!(matches!(err, ProtocolError::VersionMismatch { found, .. } if found == PROTOCOL_VERSION + 1));
    let reply = client.join().unwrap();
    assert!(
        reply.contains("\"kind\":\"error\"") && reply.contains("version"),
        "{reply}"
    );
}

struct Stall;

impl Read for Stall {
    fn read(&mut self, _: &mut [u8]) -> std::io::Result<usize> {
        thread::sleep(Duration::from_secs(3600));
        Ok(0)
    }
}

#[test]
fn silent_agent_times_out() {
    let conn = Connection::new(Stall, std::io::sink(), Some(Duration::from_millis(150)));
    let err = RemoteAgent::handshake(conn).err().unwrap();
    assert!(matches!(err, ProtocolError::Timeout(_)), "{err}");
}

#[test]
fn closed_pipe_is_reported() {
    let conn = Connection::new(std::io::empty(), std::io::sink(), None);
    assert!(matches!(
        RemoteAgent::handshake(conn).err().unwrap(),
        ProtocolError::Closed
    ));
}

#[test]
fn malformed_lines_are_rejected() {
    let conn = Connection::new(
        &b"{\"protocol_version\":1,\"kind\":\"hello\"\n"[..],
        std::io::sink(),
        None,
    );
    let err = RemoteAgent::handshake(conn).err().unwrap();
    assert!(matches!(err, ProtocolError::Malformed(_)), "{err}");
}

/// Stops on every step.
struct Stopper;

impl Agent for Stopper {
    fn name(&self) -> String {
        "stopper".into()
    }

    fn begin_episode(&mut self, _: &EpisodeStart, _: Option<&davnav::engine::Engine>) -> Result<(), AgentError> {
        Ok(())
    }

    fn act(&mut self, _: &Percept) -> Result<Decision, AgentError> {
        Ok(Decision::Raw(RawAction::Stop))
    }
}

#[test]
fn immediate_stop_is_a_wrong_stop() {
    let (suite, world) = small_suite("raw");
    for ep in &suite.episodes {
        let log = run_one(&world, ep, &mut Stopper).unwrap();
        assert_eq!(log.outcome, Outcome::FailureWrongStop);
        assert_eq!(log.records.len(), 1);
        assert_eq!(log.action_count, 0);
        assert!((log.total_reward + 0.01).abs() < 1e-12, "{}", log.total_reward);
    }
}
