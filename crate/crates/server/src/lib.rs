//! HTTP front end: login, source and intervention selection, push ingest,
//! MJPEG streams of re-rendered frames, view history and annotation.
//!
//! Data layout under `data_root`:
//! - `interventions/` holds the intervention registry,
//! - `history/` holds per-user frame history and annotations,
//! - `sources/<user>.json` holds sources registered through the API.

pub mod auth;
pub mod config;
pub mod error;
pub mod session;

mod api;

use std::collections::HashMap;
use std::future::Future;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use rand::RngCore;
use rerender_core::history::HistoryStore;
use rerender_core::intervention::Registry;
use rerender_core::source::{PushHub, SourceDescriptor};
use tokio::net::TcpListener;

pub use crate::api::{router, AuthUser};
use crate::auth::{Account, Accounts};
use crate::config::{ConfigError, ServerConfig, SourceEntry};
use crate::session::Session;

#[derive(Debug, thiserror::Error)]
pub enum StartError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot open data root: {0}")]
    Store(#[from] rerender_core::Error),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
}

pub struct AppState {
    pub config: ServerConfig,
    pub accounts: Mutex<Accounts>,
    pub registry: RwLock<Registry>,
    pub history: Mutex<HistoryStore>,
    pub hub: PushHub,
    pub sessions: Mutex<HashMap<String, Arc<Session>>>,
}

pub(crate) fn random_id() -> String {
    let mut bytes = [0u8; 12];
    rand::rng().fill_bytes(&mut bytes);
    hex::encode(bytes)
}

impl AppState {
    /// Opens the stores under the data root and loads accounts and sources
    /// from the config plus any sources registered earlier through the API.
    pub fn open(config: ServerConfig) -> Result<Arc<Self>, StartError> {
        config.validate()?;
        let registry = Registry::open(config.data_root.join("interventions"))?;
        let history = HistoryStore::open(config.data_root.join("history"))?;
        let mut state = AppState {
            accounts: Mutex::new(Accounts::new(config.token_ttl_secs.saturating_mul(1000))),
            registry: RwLock::new(registry),
            history: Mutex::new(history),
            hub: PushHub::new(),
            sessions: Mutex::new(HashMap::new()),
            config,
        };
        state.load_accounts()?;
        Ok(Arc::new(state))
    }

    fn load_accounts(&mut self) -> Result<(), StartError> {
        let accounts = self.accounts.get_mut().expect("accounts lock");
        let registry = self.registry.get_mut().expect("registry lock");
        let history = self.history.get_mut().expect("history lock");
        for u in &self.config.users {
            let hash = match (&u.password, &u.password_hash) {
                (Some(pw), _) => auth::hash_password(pw),
                (None, Some(h)) if auth::check_hash(h) => h.clone(),
                _ => return Err(ConfigError::Invalid(format!("user {} has an unreadable password_hash", u.name)).into()),
            };
            let mut account = Account::new(&u.name, hash);
            for entry in u.sources.iter().chain(&stored_sources(&self.config.data_root, &u.name)) {
                if account.sources.contains_key(&entry.source_id) {
                    continue;
                }
                let desc = SourceDescriptor {
                    source_id: entry.source_id.clone(),
                    config: entry.config.clone(),
                    registered_user: u.name.clone(),
                };
                desc.validate().map_err(|e| ConfigError::Invalid(format!("user {} source {}: {e}", u.name, entry.source_id)))?;
                account.sources.insert(desc.source_id.clone(), desc);
            }
            registry.add_user(&u.name);
            history.ensure_user(&u.name);
            accounts.insert(account);
        }
        Ok(())
    }

    /// Registers a source for `user` and persists it.
    pub fn add_source(&self, user: &str, desc: SourceDescriptor) -> rerender_core::Result<()> {
        let mut accounts = self.accounts.lock().expect("accounts lock");
        let account = accounts.get_mut(user).ok_or_else(|| rerender_core::Error::NotFound(format!("user {user}")))?;
        if account.sources.contains_key(&desc.source_id) {
            return Err(rerender_core::Error::Conflict(format!("source {} already registered", desc.source_id)));
        }
        let mut stored = stored_sources(&self.config.data_root, user);
        stored.push(SourceEntry { source_id: desc.source_id.clone(), config: desc.config.clone() });
        let path = sources_path(&self.config.data_root, user);
        std::fs::create_dir_all(path.parent().expect("sources file has a parent"))?;
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(&stored)?)?;
        std::fs::rename(&tmp, &path)?;
        account.sources.insert(desc.source_id.clone(), desc);
        Ok(())
    }
}

fn sources_path(root: &std::path::Path, user: &str) -> PathBuf {
    root.join("sources").join(format!("{user}.json"))
}

fn stored_sources(root: &std::path::Path, user: &str) -> Vec<SourceEntry> {
    let path = sources_path(root, user);
    match std::fs::read(&path) {
        Ok(bytes) => serde_json::from_slice(&bytes).unwrap_or_else(|e| {
            tracing::warn!(path = %path.display(), error = %e, "ignoring unreadable sources file");
            Vec::new()
        }),
        Err(_) => Vec::new(),
    }
}

pub async fn bind(config: &ServerConfig) -> Result<TcpListener, StartError> {
    let addr = config.addr();
    TcpListener::bind(&addr).await.map_err(|source| StartError::Bind { addr, source })
}

/// Serves until `shutdown` resolves. Shutdown stops every session pipeline
/// so open streams end and the server can drain.
pub async fn serve(
    listener: TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    if let Ok(addr) = listener.local_addr() {
        tracing::info!(%addr, "listening");
    }
    let app = router(state.clone());
    let stop_all = async move {
        shutdown.await;
        for s in state.sessions.lock().expect("sessions lock").values() {
            s.stop();
        }
    };
    axum::serve(listener, app).with_graceful_shutdown(stop_all).await
}
