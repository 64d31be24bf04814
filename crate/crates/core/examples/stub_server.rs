//! Serves the mock trigram model over the JSON wire protocol.
//!
//! `cargo run -p congen --example stub_server -- [addr]`

use std::sync::Arc;

use congen::lm::stub::StubServer;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let addr = std::env::args().nth(1).unwrap_or_else(|| "127.0.0.1:8080".into());
    let lm = congen::mock::ngram(0)?;
    let server = StubServer::builder(Arc::new(lm)).start_on(&addr)?;
    println!("serving on {}", server.url());
    server.join();
    Ok(())
}
