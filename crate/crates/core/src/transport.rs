//! Request/response transports: an in-process channel and loopback TCP.
//! Both carry the same encoded frames into the same dispatcher.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};

use crate::error::{Error, Result};
use crate::protocol::{AddPayload, BloomTriple, RefreshPayload, SearchResponse, SearchToken};
use crate::crypto::GroupKey;
use crate::server::Server;
use crate::wire::{parse_header, ErrorCode, Kind, Request, Response, HEADER_LEN};

/// A server behind a single lock: every request runs to completion before
/// the next one starts, whichever connection it arrives on.
#[derive(Clone, Debug)]
pub struct SharedServer(Arc<Mutex<Server>>);

impl SharedServer {
    pub fn new(server: Server) -> Self {
        Self(Arc::new(Mutex::new(server)))
    }

    pub fn lock(&self) -> MutexGuard<'_, Server> {
        self.0.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    pub fn handle(&self, request: Request) -> Response {
        let kind = request.kind();
        let mut server = self.lock();
        let outcome = match request {
            Request::Add(p) => server.add(p).map(|()| Response::Ack(kind)),
            Request::Refresh(p) => server.refresh(p).map(|()| Response::Ack(kind)),
            Request::Search(t) => server.search(&t).map(Response::Search),
            Request::GetBloom => server.get_bloom().map(Response::Bloom),
            Request::Rotate(g) => server.install_group_key(g).map(|()| Response::Ack(kind)),
        };
        outcome.unwrap_or_else(|e| Response::Error(kind, ErrorCode::for_error(&e)))
    }

    /// Decodes a request frame and encodes the response. Returns `None`
    /// when the frame is too damaged to tell which response kind to use.
    pub fn handle_frame(&self, frame: &[u8]) -> Option<Vec<u8>> {
        match Request::decode(frame) {
            Ok(req) => Some(self.handle(req).encode()),
            Err(_) => {
                let kind = match frame.get(1) {
                    Some(0x01) => Kind::Add,
                    Some(0x02) => Kind::Refresh,
                    Some(0x03) => Kind::Search,
                    Some(0x04) => Kind::GetBloom,
                    Some(0x05) => Kind::Rotate,
                    _ => return None,
                };
                Some(Response::Error(kind, ErrorCode::Malformed).encode())
            }
        }
    }
}

/// A way of getting a request frame to a server and its response back.
pub trait Transport {
    fn round_trip(&mut self, frame: &[u8]) -> Result<Vec<u8>>;

    fn call(&mut self, request: &Request) -> Result<Response> {
        let bytes = self.round_trip(&request.encode())?;
        let response = Response::decode(&bytes)?;
        if response.kind() != request.kind() {
            return Err(Error::format(1, "response kind does not match the request"));
        }
        Ok(response)
    }

    fn add(&mut self, payload: AddPayload) -> Result<()> {
        expect_ack(self.call(&Request::Add(payload))?)
    }

    fn refresh(&mut self, payload: RefreshPayload) -> Result<()> {
        expect_ack(self.call(&Request::Refresh(payload))?)
    }

    fn rotate(&mut self, group: GroupKey) -> Result<()> {
        expect_ack(self.call(&Request::Rotate(group))?)
    }

    fn search(&mut self, token: SearchToken) -> Result<SearchResponse> {
        match self.call(&Request::Search(token))? {
            Response::Search(s) => Ok(s),
            other => Err(unexpected(other)),
        }
    }

    fn get_bloom(&mut self) -> Result<BloomTriple> {
        match self.call(&Request::GetBloom)? {
            Response::Bloom(t) => Ok(t),
            other => Err(unexpected(other)),
        }
    }
}

fn expect_ack(r: Response) -> Result<()> {
    match r {
        Response::Ack(_) => Ok(()),
        other => Err(unexpected(other)),
    }
}

fn unexpected(r: Response) -> Error {
    match r {
        Response::Error(_, code) => Error::Remote(code),
        other => Error::format(1, format!("unexpected response: {other}")),
    }
}

/// Calls the dispatcher directly with encoded frames.
#[derive(Clone, Debug)]
pub struct InProcess {
    server: SharedServer,
}

impl InProcess {
    pub fn new(server: SharedServer) -> Self {
        Self { server }
    }

    pub fn server(&self) -> &SharedServer {
        &self.server
    }
}

impl Transport for InProcess {
    fn round_trip(&mut self, frame: &[u8]) -> Result<Vec<u8>> {
        self.server
            .handle_frame(frame)
            .ok_or_else(|| Error::format(1, "frame rejected without response"))
    }
}

#[derive(Debug)]
pub struct TcpClient {
    stream: TcpStream,
}

impl TcpClient {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self { stream })
    }
}

impl Transport for TcpClient {
    fn round_trip(&mut self, frame: &[u8]) -> Result<Vec<u8>> {
        self.stream.write_all(frame)?;
        read_frame(&mut self.stream)?.ok_or_else(|| {
            Error::Transport(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "server closed the connection",
            ))
        })
    }
}

/// Reads one frame, or `None` on a clean end of stream.
pub fn read_frame(stream: &mut impl Read) -> Result<Option<Vec<u8>>> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match stream.read(&mut header[got..])? {
            0 if got == 0 => return Ok(None),
            0 => return Err(Error::format(got, "connection closed inside a frame header")),
            n => got += n,
        }
    }
    let (_, _, len) = parse_header(&header)?;
    let mut frame = header.to_vec();
    frame.resize(HEADER_LEN + len, 0);
    stream.read_exact(&mut frame[HEADER_LEN..])?;
    Ok(Some(frame))
}

/// Accepts connections forever, one thread per connection.
pub fn serve(listener: TcpListener, server: SharedServer) -> Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let server = server.clone();
        thread::spawn(move || {
            // A broken connection only ends its own thread.
            let _ = serve_connection(stream, &server);
        });
    }
    Ok(())
}

fn serve_connection(mut stream: TcpStream, server: &SharedServer) -> Result<()> {
    stream.set_nodelay(true)?;
    while let Some(frame) = read_frame(&mut stream)? {
        match server.handle_frame(&frame) {
            Some(reply) => stream.write_all(&reply)?,
            None => break,
        }
    }
    Ok(())
}

/// Binds `addr` and serves in a background thread. Returns the bound
/// address (useful with port 0).
pub fn spawn_server(addr: impl ToSocketAddrs, server: SharedServer) -> Result<(SocketAddr, JoinHandle<()>)> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let handle = thread::spawn(move || {
        let _ = serve(listener, server);
    });
    Ok((local, handle))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloom::BloomParams;
    use crate::chain::Mode;
    use crate::owner::{Owner, OwnerConfig};
    use crate::server::ServerConfig;

    fn fresh(mode: Mode) -> (Owner, SharedServer) {
        let params = BloomParams::new(2f64.powi(-30), 500);
        let owner = Owner::gen_key(OwnerConfig::new(mode).with_bloom(params)).unwrap();
        let server = SharedServer::new(Server::new(ServerConfig::new(mode).with_bloom(params)).unwrap());
        (owner, server)
    }

    #[test]
    fn in_process_and_tcp_give_identical_bytes() {
        let (mut o, a) = fresh(Mode::Full);
        let b = SharedServer::new(Server::from_bytes(&a.lock().to_bytes()).unwrap());
        let mut local = InProcess::new(a);
        let (addr, _h) = spawn_server("127.0.0.1:0", b).unwrap();
        let mut remote = TcpClient::connect(addr).unwrap();

        let mut frames = vec![Request::Rotate(o.group_key()).encode()];
        for t in 1..=5 {
            frames.push(Request::Add(o.add_file(b"f", &["a", "b"], t).unwrap()).encode());
        }
        frames.push(Request::GetBloom.encode());
        frames.push(Request::Search(o.gen_token("a").unwrap()).encode());
        frames.push(Request::Search(o.gen_token("a").unwrap()).encode());
        frames.push(Request::Refresh(o.refresh_bloom(9).unwrap()).encode());
        frames.push(Request::Search(o.gen_token("b").unwrap()).encode());
        frames.push(vec![1, 3, 0, 0, 0, 1, 9]);
        for f in &frames {
            assert_eq!(local.round_trip(f).unwrap(), remote.round_trip(f).unwrap());
        }
    }

    #[test]
    fn stale_epoch_maps_to_search_error_kind() {
        let (mut o, s) = fresh(Mode::Full);
        let mut t = InProcess::new(s);
        t.rotate(o.group_key()).unwrap();
        t.add(o.add_file(b"f", &["a"], 1).unwrap()).unwrap();
        let old = o.gen_token("a").unwrap();
        o.grant_user("u");
        t.rotate(o.rotate_group_key("u").group).unwrap();
        let reply = t.round_trip(&Request::Search(old.clone()).encode()).unwrap();
        assert_eq!(reply[1], 0x83);
        assert_eq!(reply[6], ErrorCode::StaleEpoch as u8);
        assert!(matches!(t.search(old), Err(Error::Remote(ErrorCode::StaleEpoch))));
        assert_eq!(t.search(o.gen_token("a").unwrap()).unwrap().ids.len(), 1);
    }

    #[test]
    fn protocol_errors_are_not_transport_errors() {
        let (mut o, s) = fresh(Mode::Basic);
        let mut t = InProcess::new(s);
        let p = o.add_file(b"f", &["a"], 1).unwrap();
        t.add(p.clone()).unwrap();
        assert!(matches!(t.add(p), Err(Error::Remote(ErrorCode::DuplicateLabel))));
        assert!(matches!(t.get_bloom(), Err(Error::Remote(ErrorCode::Unsupported))));
        assert!(matches!(TcpClient::connect("127.0.0.1:1"), Err(Error::Transport(_))));
    }

    #[test]
    fn concurrent_tcp_clients_share_one_server() {
        let (mut o, s) = fresh(Mode::Basic);
        let (addr, _h) = spawn_server("127.0.0.1:0", s.clone()).unwrap();
        let payloads: Vec<_> = (0..40).map(|t| o.add_file(b"f", &["a"], t).unwrap()).collect();
        let handles: Vec<_> = payloads
            .chunks(10)
            .map(|chunk| {
                let chunk = chunk.to_vec();
                thread::spawn(move || {
                    let mut c = TcpClient::connect(addr).unwrap();
                    for p in chunk {
                        c.add(p).unwrap();
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        let mut c = TcpClient::connect(addr).unwrap();
        assert_eq!(c.search(o.gen_token("a").unwrap()).unwrap().ids.len(), 40);
        assert_eq!(s.lock().stats().searches, 1);
    }
}
