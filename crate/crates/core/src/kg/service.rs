//! Local HTTP query endpoint: `POST /query {"query": "..."}` returns a
//! [`PromptBundle`] as JSON.

use std::net::SocketAddr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{assemble_prompt, parse_query, retrieve, KnowledgeGraph, PromptBundle, PromptTemplate, DEFAULT_LIMIT};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySettings {
    pub limit: usize,
    pub template: PromptTemplate,
}

impl Default for QuerySettings {
    fn default() -> Self {
        QuerySettings {
            limit: DEFAULT_LIMIT,
            template: PromptTemplate::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryRequest {
    pub query: String,
}

/// Parse, retrieve and assemble in one step.
pub fn answer_query(graph: &KnowledgeGraph, query: &str, settings: &QuerySettings) -> PromptBundle {
    let parsed = parse_query(query, graph);
    let triples = retrieve(graph, &parsed, settings.limit);
    assemble_prompt(query, &triples, &settings.template)
}

pub struct QueryServer {
    server: Arc<tiny_http::Server>,
    graph: Arc<KnowledgeGraph>,
    settings: QuerySettings,
}

impl QueryServer {
    pub fn bind(addr: &str, graph: Arc<KnowledgeGraph>, settings: QuerySettings) -> std::io::Result<Self> {
        let server = tiny_http::Server::http(addr).map_err(std::io::Error::other)?;
        Ok(QueryServer {
            server: Arc::new(server),
            graph,
            settings,
        })
    }

    pub fn local_addr(&self) -> Option<SocketAddr> {
        self.server.server_addr().to_ip()
    }

    /// Handle for stopping [`Self::serve`] from another thread.
    pub fn shutdown_handle(&self) -> impl Fn() + Send + 'static {
        let server = Arc::clone(&self.server);
        move || server.unblock()
    }

    /// Serve until unblocked.
    pub fn serve(&self) {
        for request in self.server.incoming_requests() {
            self.handle(request);
        }
    }

    fn handle(&self, mut request: tiny_http::Request) {
        let json_header =
            tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..]).expect("static header");
        let reply = |status: u16, body: String| {
            tiny_http::Response::from_string(body)
                .with_status_code(status)
                .with_header(json_header.clone())
        };
        let response = if request.url() != "/query" {
            reply(404, r#"{"error":"not found"}"#.into())
        } else if *request.method() != tiny_http::Method::Post {
            reply(405, r#"{"error":"use POST"}"#.into())
        } else {
            let mut body = String::new();
            match request
                .as_reader()
                .read_to_string(&mut body)
                .map_err(|e| e.to_string())
                .and_then(|_| serde_json::from_str::<QueryRequest>(&body).map_err(|e| e.to_string()))
            {
                Ok(q) => {
                    let bundle = answer_query(&self.graph, &q.query, &self.settings);
                    reply(200, serde_json::to_string(&bundle).expect("bundle serializes"))
                }
                Err(e) => reply(400, serde_json::json!({ "error": e }).to_string()),
            }
        };
        if let Err(e) = request.respond(response) {
            log::warn!("query response failed: {e}");
        }
    }
}
