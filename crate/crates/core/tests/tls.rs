mod common;

use std::sync::Arc;

use mtocs_core::api;
use rustls::pki_types::ServerName;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;

struct Server {
    addr: std::net::SocketAddr,
    roots: rustls::RootCertStore,
    _stop: tokio::sync::oneshot::Sender<()>,
    _dir: tempfile::TempDir,
}

async fn start() -> Server {
    let generated = rcgen::generate_simple_self_signed(vec!["localhost".to_string()]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("cert.pem");
    let key = dir.path().join("key.pem");
    std::fs::write(&cert, generated.cert.pem()).unwrap();
    std::fs::write(&key, generated.signing_key.serialize_pem()).unwrap();
    let tls = api::tls_config(&cert, &key).unwrap();

    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let app = api::router(Arc::new(common::service_with_accounts()));
    tokio::spawn(api::run(listener, app, Some(tls), async {
        let _ = stopped.await;
    }));

    let mut roots = rustls::RootCertStore::empty();
    roots.add(generated.cert.der().clone()).unwrap();
    Server {
        addr,
        roots,
        _stop: stop,
        _dir: dir,
    }
}

fn client(roots: rustls::RootCertStore, alpn: &[&[u8]]) -> tokio_rustls::TlsConnector {
    let mut config = rustls::ClientConfig::builder_with_provider(Arc::new(rustls::crypto::ring::default_provider()))
        .with_safe_default_protocol_versions()
        .unwrap()
        .with_root_certificates(roots)
        .with_no_client_auth();
    config.alpn_protocols = alpn.iter().map(|p| p.to_vec()).collect();
    tokio_rustls::TlsConnector::from(Arc::new(config))
}

#[tokio::test]
async fn serves_https() {
    let server = start().await;
    let tcp = TcpStream::connect(server.addr).await.unwrap();
    let mut tls = client(server.roots.clone(), &[b"http/1.1"])
        .connect(ServerName::try_from("localhost").unwrap(), tcp)
        .await
        .unwrap();
    assert_eq!(tls.get_ref().1.alpn_protocol(), Some(&b"http/1.1"[..]));
    tls.write_all(b"GET /healthz HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut response = String::new();
    tls.read_to_string(&mut response).await.unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.ends_with("{\"status\":\"ok\"}"), "{response}");
}

#[tokio::test]
async fn offers_http2() {
    let server = start().await;
    let tcp = TcpStream::connect(server.addr).await.unwrap();
    let tls = client(server.roots.clone(), &[b"h2", b"http/1.1"])
        .connect(ServerName::try_from("localhost").unwrap(), tcp)
        .await
        .unwrap();
    assert_eq!(tls.get_ref().1.alpn_protocol(), Some(&b"h2"[..]));
}

#[tokio::test]
async fn refuses_plain_http_and_untrusted_clients() {
    let server = start().await;

    let mut plain = TcpStream::connect(server.addr).await.unwrap();
    plain
        .write_all(b"GET /healthz HTTP/1.1\r\nHost: localhost\r\n\r\n")
        .await
        .unwrap();
    let mut buf = Vec::new();
    let _ = plain.read_to_end(&mut buf).await;
    assert!(!String::from_utf8_lossy(&buf).contains("200 OK"));

    // A client that does not trust the certificate cannot connect, and the
    // server keeps serving afterwards.
    let tcp = TcpStream::connect(server.addr).await.unwrap();
    let untrusting = client(rustls::RootCertStore::empty(), &[]);
    assert!(untrusting
        .connect(ServerName::try_from("localhost").unwrap(), tcp)
        .await
        .is_err());

    let tcp = TcpStream::connect(server.addr).await.unwrap();
    let ok = client(server.roots.clone(), &[])
        .connect(ServerName::try_from("localhost").unwrap(), tcp)
        .await;
    assert!(ok.is_ok());
}

#[test]
fn rejects_bad_key_material() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("cert.pem");
    let key = dir.path().join("key.pem");
    std::fs::write(&cert, "not a certificate").unwrap();
    std::fs::write(&key, "not a key").unwrap();
    let err = api::tls_config(&cert, &key).unwrap_err();
    assert_eq!(err.code(), "config_error");
    let err = api::tls_config(&dir.path().join("missing.pem"), &key).unwrap_err();
    assert_eq!(err.code(), "config_error");
}
