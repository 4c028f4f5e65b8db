//! Headless websocket client for exercising a running server.

#![allow(dead_code)]

use std::net::SocketAddr;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

use swarmlink_core::{load_scenario, ScenarioConfig};
use swarmlink_server::protocol::{decode_server, ServerMessage, StateMessage, TactileMessage};
use swarmlink_server::{start, LiveSession, ServerConfig, ServerHandle};

pub fn scenario(name: &str) -> ScenarioConfig {
    let path = format!("{}/../../scenarios/{name}", env!("CARGO_MANIFEST_DIR"));
    load_scenario(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn serve(cfg: ScenarioConfig, rate_div: u32) -> ServerHandle {
    let mut config = ServerConfig::new("127.0.0.1:0".parse().unwrap());
    config.rate_div = rate_div;
    start(LiveSession::new(cfg).unwrap(), config).unwrap()
}

pub struct Client {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
}

impl Client {
    pub async fn connect(addr: SocketAddr) -> Self {
        let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}")).await.unwrap();
        Self { ws }
    }

    pub async fn send(&mut self, text: &str) {
        self.ws.send(Message::Text(text.to_owned())).await.unwrap();
    }

    pub async fn next(&mut self) -> ServerMessage {
        loop {
            let msg = tokio::time::timeout(Duration::from_secs(3), self.ws.next())
                .await
                .expect("server went quiet")
                .expect("stream ended")
                .unwrap();
            if let Message::Text(text) = msg {
                return decode_server(&text).unwrap();
            }
        }
    }

    pub async fn next_state(&mut self) -> StateMessage {
        loop {
            if let ServerMessage::State(s) = self.next().await {
                return s;
            }
        }
    }

    /// Next message that is neither state nor tactile.
    pub async fn next_reply(&mut self) -> ServerMessage {
        loop {
            match self.next().await {
                ServerMessage::State(_) | ServerMessage::Tactile(_) => {}
                other => return other,
            }
        }
    }

    pub async fn next_tactile(&mut self) -> TactileMessage {
        loop {
            if let ServerMessage::Tactile(t) = self.next().await {
                return t;
            }
        }
    }
}
