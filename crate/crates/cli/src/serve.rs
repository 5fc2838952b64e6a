use std::sync::Arc;

use axum::extract::State;
use axum::http::{header, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;

use paramsens::study::{Preprocessed, QueryService};

/// Runs the query service until interrupted. Only GET is answered; every
/// path is routed through [`QueryService::handle`].
pub fn serve(pre: Preprocessed, host: &str, port: u16) -> anyhow::Result<()> {
    let service = Arc::new(QueryService::new(pre));
    let app = Router::new().fallback(handle).with_state(service);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port)).await?;
        println!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                tokio::signal::ctrl_c().await.ok();
            })
            .await?;
        Ok(())
    })
}

async fn handle(State(service): State<Arc<QueryService>>, method: Method, uri: Uri) -> Response {
    if method != Method::GET {
        return (StatusCode::METHOD_NOT_ALLOWED, [(header::ALLOW, "GET")]).into_response();
    }
    let path = uri.path().to_string();
    let query = uri.query().unwrap_or("").to_string();
    let reply = match tokio::task::spawn_blocking(move || service.handle(&path, &query)).await {
        Ok(r) => r,
        Err(e) => return (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    };
    let status = StatusCode::from_u16(reply.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    let headers = [
        (header::CONTENT_TYPE, "application/json"),
        (header::ACCESS_CONTROL_ALLOW_ORIGIN, "*"),
    ];
    (status, headers, reply.body.to_string()).into_response()
}
