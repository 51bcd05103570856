use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use tiny_http::{Header, Method, Response, Server};

use super::{EvalError, GenerateRequest, ModelEndpoint};

/// A running `/v1/generate` server. Dropping the handle stops it.
pub struct ServerHandle {
    addr: SocketAddr,
    server: Arc<Server>,
    workers: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server stops.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

fn json_response(status: u16, body: String) -> Response<std::io::Cursor<Vec<u8>>> {
    let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
    Response::from_string(body)
        .with_status_code(status)
        .with_header(header)
}

fn error_body(reason: &str) -> String {
    serde_json::json!({ "error": reason }).to_string()
}

fn handle(endpoint: &dyn ModelEndpoint, mut req: tiny_http::Request) {
    let response = if req.url() != "/v1/generate" {
        json_response(404, error_body("not found"))
    } else if *req.method() != Method::Post {
        json_response(405, error_body("use POST"))
    } else {
        let mut body = String::new();
        match req.as_reader().read_to_string(&mut body) {
            Err(e) => json_response(400, error_body(&format!("unreadable body: {e}"))),
            Ok(_) => match serde_json::from_str::<GenerateRequest>(&body) {
                Err(e) => json_response(400, error_body(&format!("malformed request: {e}"))),
                Ok(g) => match g.validate() {
                    Err(reason) => json_response(400, error_body(&reason)),
                    Ok(()) => match endpoint.generate(&g) {
                        Ok(r) => json_response(
                            200,
                            serde_json::to_string(&r).expect("response serializes"),
                        ),
                        Err(e) => json_response(500, error_body(&e.to_string())),
                    },
                },
            },
        }
    };
    if let Err(e) = req.respond(response) {
        log::warn!("failed to send response: {e}");
    }
}

/// Serves `endpoint` on `addr` (e.g. `127.0.0.1:0`) with `threads` workers.
pub fn serve(
    endpoint: Arc<dyn ModelEndpoint>,
    addr: &str,
    threads: usize,
) -> Result<ServerHandle, EvalError> {
    let server = Arc::new(Server::http(addr).map_err(|e| EvalError::Server(e.to_string()))?);
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| EvalError::Server("server is not bound to an IP address".into()))?;
    let workers = (0..threads.max(1))
        .map(|_| {
            let server = Arc::clone(&server);
            let endpoint = Arc::clone(&endpoint);
            std::thread::spawn(move || {
                while let Ok(req) = server.recv() {
                    handle(endpoint.as_ref(), req);
                }
            })
        })
        .collect();
    Ok(ServerHandle {
        addr,
        server,
        workers,
    })
}
