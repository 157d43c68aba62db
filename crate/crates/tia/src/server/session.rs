//! Per-control-connection state machine, kept free of sockets so the
//! command handling is testable on its own.

use std::io;

use crate::control::{ControlMessage, Transport};

/// State of one control connection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionState {
    pub id: u64,
    /// Allocated data connection, if any. At most one per session.
    pub data: Option<(Transport, u16)>,
    pub state_port: Option<u16>,
    pub transmitting: bool,
}

impl SessionState {
    pub fn new(id: u64) -> SessionState {
        SessionState { id, data: None, state_port: None, transmitting: false }
    }
}

/// Supplies the ports a session may need. The server binds real sockets
/// here; tests plug in a fake.
pub trait SessionPorts {
    fn open_data_port(&mut self, transport: Transport) -> io::Result<u16>;
    fn open_state_port(&mut self) -> io::Result<u16>;
}

/// Computes the reply for one received message and applies the state
/// transition. Every command gets exactly one reply; unknown or
/// out-of-place messages get an `Error` with a description.
pub fn handle_command(
    session: &mut SessionState,
    msg: &ControlMessage,
    metainfo_xml: &[u8],
    ports: &mut dyn SessionPorts,
) -> ControlMessage {
    match msg {
        ControlMessage::CheckProtocolVersion => ControlMessage::Ok,
        ControlMessage::GetMetaInfo => ControlMessage::MetaInfo { content: metainfo_xml.to_vec() },
        ControlMessage::GetDataConnection(transport) => match session.data {
            Some((allocated, port)) if allocated == *transport => {
                ControlMessage::DataConnectionPort(port)
            }
            Some((allocated, _)) => ControlMessage::error_with_description(format!(
                "a {allocated} data connection is already allocated for this session"
            )),
            None => match ports.open_data_port(*transport) {
                Ok(port) => {
                    session.data = Some((*transport, port));
                    ControlMessage::DataConnectionPort(port)
                }
                Err(e) => ControlMessage::error_with_description(format!(
                    "could not open a {transport} data port: {e}"
                )),
            },
        },
        ControlMessage::StartDataTransmission => {
            if session.data.is_none() {
                ControlMessage::error_with_description(
                    "no data connection; send GetDataConnection first",
                )
            } else {
                session.transmitting = true;
                ControlMessage::Ok
            }
        }
        ControlMessage::StopDataTransmission => {
            if session.transmitting {
                session.transmitting = false;
                ControlMessage::Ok
            } else {
                ControlMessage::error_with_description("data transmission is not running")
            }
        }
        ControlMessage::GetServerStateConnection => match session.state_port {
            Some(port) => ControlMessage::ServerStateConnectionPort(port),
            None => match ports.open_state_port() {
                Ok(port) => {
                    session.state_port = Some(port);
                    ControlMessage::ServerStateConnectionPort(port)
                }
                Err(e) => ControlMessage::error_with_description(format!(
                    "could not open a state port: {e}"
                )),
            },
        },
        other => ControlMessage::error_with_description(format!("{other} is not a client command")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::TiaError;

    struct FakePorts {
        next: u16,
        fail: bool,
    }

    impl FakePorts {
        fn new() -> FakePorts {
            FakePorts { next: 40_000, fail: false }
        }
    }

    impl SessionPorts for FakePorts {
        fn open_data_port(&mut self, _transport: Transport) -> io::Result<u16> {
            if self.fail {
                return Err(io::Error::other("out of sockets"));
            }
            self.next += 1;
            Ok(self.next)
        }

        fn open_state_port(&mut self) -> io::Result<u16> {
            self.open_data_port(Transport::Tcp)
        }
    }

    fn description_of(reply: &ControlMessage) -> String {
        match reply {
            ControlMessage::Error { content: Some(xml) } => {
                TiaError::from_xml(xml).unwrap().description.unwrap()
            }
            other => panic!("expected Error with description, got {other}"),
        }
    }

    #[test]
    fn check_protocol_version_is_ok_on_a_fresh_session() {
        let mut session = SessionState::new(1);
        let reply = handle_command(
            &mut session,
            &ControlMessage::CheckProtocolVersion,
            b"",
            &mut FakePorts::new(),
        );
        assert_eq!(reply, ControlMessage::Ok);
        assert_eq!(session, SessionState::new(1));
    }

    #[test]
    fn get_metainfo_returns_the_configured_document() {
        let mut session = SessionState::new(1);
        let reply = handle_command(
            &mut session,
            &ControlMessage::GetMetaInfo,
            b"<tiaMetaInfo version=\"1.0\"/>",
            &mut FakePorts::new(),
        );
        assert_eq!(
            reply,
            ControlMessage::MetaInfo { content: b"<tiaMetaInfo version=\"1.0\"/>".to_vec() }
        );
    }

    #[test]
    fn start_without_data_connection_is_an_error() {
        let mut session = SessionState::new(1);
        let reply = handle_command(
            &mut session,
            &ControlMessage::StartDataTransmission,
            b"",
            &mut FakePorts::new(),
        );
        assert!(description_of(&reply).contains("GetDataConnection"));
        assert!(!session.transmitting);
    }

    #[test]
    fn data_connection_allocation_is_idempotent_per_transport() {
        let mut session = SessionState::new(1);
        let mut ports = FakePorts::new();

        let first = handle_command(
            &mut session,
            &ControlMessage::GetDataConnection(Transport::Tcp),
            b"",
            &mut ports,
        );
        assert_eq!(first, ControlMessage::DataConnectionPort(40_001));

        let again = handle_command(
            &mut session,
            &ControlMessage::GetDataConnection(Transport::Tcp),
            b"",
            &mut ports,
        );
        assert_eq!(again, ControlMessage::DataConnectionPort(40_001));

        let other = handle_command(
            &mut session,
            &ControlMessage::GetDataConnection(Transport::Udp),
            b"",
            &mut ports,
        );
        assert!(description_of(&other).contains("already allocated"));
        assert_eq!(session.data, Some((Transport::Tcp, 40_001)));
    }

    #[test]
    fn start_stop_lifecycle() {
        let mut session = SessionState::new(1);
        let mut ports = FakePorts::new();
        handle_command(
            &mut session,
            &ControlMessage::GetDataConnection(Transport::Tcp),
            b"",
            &mut ports,
        );

        let reply =
            handle_command(&mut session, &ControlMessage::StartDataTransmission, b"", &mut ports);
        assert_eq!(reply, ControlMessage::Ok);
        assert!(session.transmitting);

        // A second start is harmless.
        let reply =
            handle_command(&mut session, &ControlMessage::StartDataTransmission, b"", &mut ports);
        assert_eq!(reply, ControlMessage::Ok);

        let reply =
            handle_command(&mut session, &ControlMessage::StopDataTransmission, b"", &mut ports);
        assert_eq!(reply, ControlMessage::Ok);
        assert!(!session.transmitting);

        let reply =
            handle_command(&mut session, &ControlMessage::StopDataTransmission, b"", &mut ports);
        assert!(description_of(&reply).contains("not running"));
    }

    #[test]
    fn state_port_allocation_is_idempotent() {
        let mut session = SessionState::new(1);
        let mut ports = FakePorts::new();
        let first =
            handle_command(&mut session, &ControlMessage::GetServerStateConnection, b"", &mut ports);
        let second =
            handle_command(&mut session, &ControlMessage::GetServerStateConnection, b"", &mut ports);
        assert_eq!(first, ControlMessage::ServerStateConnectionPort(40_001));
        assert_eq!(second, first);
    }

    #[test]
    fn allocation_failure_becomes_an_error_reply() {
        let mut session = SessionState::new(1);
        let mut ports = FakePorts::new();
        ports.fail = true;
        let reply = handle_command(
            &mut session,
            &ControlMessage::GetDataConnection(Transport::Udp),
            b"",
            &mut ports,
        );
        assert!(description_of(&reply).contains("out of sockets"));
        assert_eq!(session.data, None);
    }

    #[test]
    fn non_command_messages_are_rejected() {
        let mut session = SessionState::new(1);
        for msg in [
            ControlMessage::Ok,
            ControlMessage::ServerStateRunning,
            ControlMessage::DataConnectionPort(1234),
        ] {
            let reply = handle_command(&mut session, &msg, b"", &mut FakePorts::new());
            assert!(description_of(&reply).contains("not a client command"));
        }
    }
}
