//! Accounts, password hashes and session tokens.

use std::collections::{BTreeMap, HashMap};

use argon2::password_hash::{PasswordHash, PasswordHasher, PasswordVerifier, SaltString};
use argon2::Argon2;
use rand::RngCore;
use rerender_core::source::SourceDescriptor;
use serde::Serialize;

pub struct Account {
    pub name: String,
    hash: String,
    pub sources: BTreeMap<String, SourceDescriptor>,
}

impl Account {
    pub fn new(name: impl Into<String>, hash: String) -> Self {
        Account { name: name.into(), hash, sources: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionToken {
    pub token: String,
    pub user: String,
    pub expires_ms: u64,
}

pub struct Accounts {
    users: BTreeMap<String, Account>,
    tokens: HashMap<String, SessionToken>,
    ttl_ms: u64,
}

pub fn hash_password(password: &str) -> String {
    let mut salt = [0u8; 16];
    rand::rng().fill_bytes(&mut salt);
    let salt = SaltString::encode_b64(&salt).expect("16 bytes is a valid salt");
    Argon2::default().hash_password(password.as_bytes(), &salt).expect("argon2 with default params").to_string()
}

pub fn check_hash(hash: &str) -> bool {
    PasswordHash::new(hash).is_ok()
}

fn verify(hash: &str, password: &str) -> bool {
    PasswordHash::new(hash).is_ok_and(|h| Argon2::default().verify_password(password.as_bytes(), &h).is_ok())
}

fn new_token() -> String {
    let mut bytes = [0u8; 32];
    rand::rng().fill_bytes(&mut bytes);
    hex::encode(bytes)
}

impl Accounts {
    pub fn new(ttl_ms: u64) -> Self {
        Accounts { users: BTreeMap::new(), tokens: HashMap::new(), ttl_ms }
    }

    pub fn insert(&mut self, account: Account) {
        self.users.insert(account.name.clone(), account);
    }

    pub fn get(&self, user: &str) -> Option<&Account> {
        self.users.get(user)
    }

    pub fn get_mut(&mut self, user: &str) -> Option<&mut Account> {
        self.users.get_mut(user)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Account> {
        self.users.values()
    }

    /// A fresh token when the credentials match.
    pub fn login(&mut self, user: &str, password: &str, now_ms: u64) -> Option<SessionToken> {
        let account = self.users.get(user)?;
        if !verify(&account.hash, password) {
            return None;
        }
        let t = SessionToken { token: new_token(), user: user.to_string(), expires_ms: now_ms + self.ttl_ms };
        self.tokens.retain(|_, t| t.expires_ms > now_ms);
        self.tokens.insert(t.token.clone(), t.clone());
        Some(t)
    }

    /// The user behind a live token. Expired tokens are forgotten.
    pub fn authenticate(&mut self, token: &str, now_ms: u64) -> Option<String> {
        let t = self.tokens.get(token)?;
        if t.expires_ms <= now_ms {
            self.tokens.remove(token);
            return None;
        }
        Some(t.user.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn login_and_expiry() {
        let mut a = Accounts::new(1000);
        let hash = hash_password("secret");
        assert!(check_hash(&hash));
        assert_ne!(hash, hash_password("secret"), "salted");
        a.insert(Account::new("alice", hash));
        assert!(a.login("alice", "wrong", 0).is_none());
        assert!(a.login("bob", "secret", 0).is_none());
        let t = a.login("alice", "secret", 5).unwrap();
        assert_eq!(t.expires_ms, 1005);
        assert_eq!(a.authenticate(&t.token, 1004).as_deref(), Some("alice"));
        assert_eq!(a.authenticate(&t.token, 1005), None);
        assert_eq!(a.authenticate(&t.token, 10), None, "expired tokens are dropped");
    }
}
