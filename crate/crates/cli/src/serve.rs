//! Minimal read-only HTTP endpoint for a metrics snapshot.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};

const CONTENT_TYPE: &str = "text/plain; version=0.0.4; charset=utf-8";

pub fn serve(addr: &str, body: &str, once: bool, log: &mut dyn Write) -> io::Result<()> {
    let listener = TcpListener::bind(addr)?;
    writeln!(log, "serving http://{}/metrics", listener.local_addr()?)?;
    log.flush()?;
    for stream in listener.incoming() {
        if let Err(e) = answer(stream?, body) {
            writeln!(log, "request failed: {e}")?;
        }
        if once {
            break;
        }
    }
    Ok(())
}

fn answer(stream: TcpStream, body: &str) -> io::Result<()> {
    let mut reader = BufReader::new(stream);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    // Drain headers up to the blank line.
    let mut line = String::new();
    while reader.read_line(&mut line)? > 0 && line != "\r\n" && line != "\n" {
        line.clear();
    }
    let mut parts = request_line.split_whitespace();
    let (method, path) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
    let (status, content_type, payload) = match (method, path) {
        ("GET", "/metrics") => ("200 OK", CONTENT_TYPE, body),
        ("GET", _) => ("404 Not Found", "text/plain", "not found\n"),
        _ => ("405 Method Not Allowed", "text/plain", "method not allowed\n"),
    };
    let mut stream = reader.into_inner();
    write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    )?;
    stream.flush()
}
