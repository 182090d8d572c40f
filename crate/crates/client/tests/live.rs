use kitchen_api::{CreateSession, WireAssignment};
use kitchen_client::{Client, ClientError};
use kitchen_core::eval::Configuration;
use kitchen_core::kitchen::{Subtask, Worker};
use kitchen_service::{serve_on, ServiceConfig};

async fn spawn(config: ServiceConfig) -> Client {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve_on(listener, config));
    Client::new(format!("http://{addr}/")).unwrap()
}

#[tokio::test]
async fn full_round_trip_over_tcp() {
    let client = spawn(ServiceConfig::default()).await;
    assert_eq!(client.health().await.unwrap()["status"], "ok");

    let req = CreateSession {
        configuration: Some(Configuration::Disrupted),
        condition: Some("baseline".into()),
        ..Default::default()
    };
    let view = client.create_session(&req).await.unwrap();
    let id = view.session_id;
    assert_eq!(view.rounds, 6);
    assert_eq!(client.session(id).await.unwrap(), view);
    assert_eq!(client.tip(id).await.unwrap().tip.unwrap().display, "Chef should never plate");

    let chop = |worker| WireAssignment { worker, order: 1, subtask: Subtask::Chop };
    let v = client.assign(id, vec![chop(Worker::SousChef)], false).await.unwrap();
    assert_eq!(v.pending.len(), 1);
    let err = client.assign(id, vec![chop(Worker::Server)], false).await.unwrap_err();
    assert_eq!(err.code(), Some("illegal_assignment"));
    let v = client.assign(id, vec![chop(Worker::Server)], true).await.unwrap();
    assert_eq!(v.pending, vec![chop(Worker::Server)]);

    let v = client.commit(id).await.unwrap();
    assert_eq!(v.tick, 1);
    assert!(v.pending.is_empty());
    let fin = client.finish(id).await.unwrap();
    assert!(fin.abandoned_round);
    let err = client.commit(id).await.unwrap_err();
    assert_eq!(err.code(), Some("session_finished"));
}

#[tokio::test]
async fn errors_carry_the_service_body() {
    let client = spawn(ServiceConfig::default()).await;
    let err = client.session(uuid::Uuid::nil()).await.unwrap_err();
    match err {
        ClientError::Api { status, body } => {
            assert_eq!(status.as_u16(), 404);
            assert_eq!(body.code, "unknown_session");
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(Client::new("localhost:1"), Err(ClientError::BaseUrl(_))));
}

#[tokio::test]
async fn unreachable_service_is_a_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let client = Client::new(format!("http://{addr}")).unwrap();
    assert!(matches!(client.health().await, Err(ClientError::Transport(_))));
}
