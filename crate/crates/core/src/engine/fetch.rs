use std::time::Duration;

use super::Zone;
use crate::catalog::{DataObject, FetchEntry, Mutation, Perm};
use crate::error::{Error, Result};
use crate::path;

/// Network client behind `http_fetch`.
pub trait Fetcher: Send + Sync {
    fn fetch(&self, url: &str) -> Result<Vec<u8>>;
}

/// Plain HTTP(S) GET with a global timeout and a body size cap.
pub struct HttpFetcher {
    agent: ureq::Agent,
    max_bytes: u64,
}

impl Default for HttpFetcher {
    fn default() -> Self {
        HttpFetcher::new(Duration::from_secs(30), 256 << 20)
    }
}

impl HttpFetcher {
    pub fn new(timeout: Duration, max_bytes: u64) -> Self {
        let agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        HttpFetcher { agent, max_bytes }
    }
}

impl Fetcher for HttpFetcher {
    fn fetch(&self, url: &str) -> Result<Vec<u8>> {
        let mut resp = self.agent.get(url).call().map_err(|e| Error::FetchFailed(e.to_string()))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(Error::FetchFailed(status.to_string()));
        }
        resp.body_mut().with_config().limit(self.max_bytes).read_to_vec().map_err(|e| Error::FetchFailed(e.to_string()))
    }
}

fn check_url(url: &str) -> Result<()> {
    let rest = url
        .strip_prefix("http://")
        .or_else(|| url.strip_prefix("https://"))
        .ok_or_else(|| Error::Invalid(format!("not an http(s) url: {url}")))?;
    let host = rest.split(['/', '?', '#']).next().unwrap_or("");
    if host.is_empty() || url.chars().any(|c| c.is_whitespace() || c.is_control()) {
        return Err(Error::Invalid(format!("malformed url: {url}")));
    }
    url.parse::<ureq::http::Uri>().map_err(|e| Error::Invalid(format!("malformed url {url}: {e}")))?;
    Ok(())
}

impl Zone {
    /// Fetches `url` into `dest` on the default resource. Later calls with
    /// the same url return the stored object without network traffic for
    /// as long as it exists with its recorded checksum.
    pub fn http_fetch(&self, actor: &str, url: &str, dest: &str) -> Result<DataObject> {
        check_url(url)?;
        path::validate(dest)?;
        let cached = self.catalog.read().fetch_cache.get(url).cloned();
        if let Some(entry) = cached {
            if let Some(obj) = self.catalog.object(&entry.path) {
                if obj.checksum() == Some(entry.checksum.as_str()) {
                    self.catalog.require(&entry.path, actor, Perm::Read)?;
                    return Ok(obj);
                }
            }
        }
        let resc = self.require_default_resource()?;
        // Check write access before touching the network.
        let parent = path::parent(dest).ok_or_else(|| Error::Invalid("cannot fetch into /".into()))?;
        let target = if self.catalog.object(dest).is_some() { dest } else { parent };
        self.catalog.require(target, actor, Perm::Write)?;
        let bytes = self.network_fetch(url)?;
        let obj = self.put(actor, dest, &bytes, Some(&resc))?;
        let checksum = obj.checksum().unwrap_or_default().to_string();
        self.commit(Mutation::RecordFetch {
            entry: FetchEntry { url: url.to_string(), path: dest.to_string(), checksum: checksum.clone() },
        })?;
        self.audit(actor, "data.fetch", format!("{url} -> {dest} {checksum}"));
        Ok(obj)
    }
}
