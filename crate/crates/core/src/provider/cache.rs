use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

/// Content-addressed store of response texts: `<key>.txt` holds the exact
/// bytes, `<key>.model` the model that produced them.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

pub struct CachedResponse {
    pub text: String,
    pub model: String,
}

impl ResponseCache {
    pub fn new(dir: impl AsRef<Path>) -> io::Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(ResponseCache { dir: dir.as_ref().to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn get(&self, key: &str) -> io::Result<Option<CachedResponse>> {
        let text = match fs::read_to_string(self.dir.join(format!("{key}.txt"))) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e),
        };
        let model = fs::read_to_string(self.dir.join(format!("{key}.model"))).unwrap_or_default();
        Ok(Some(CachedResponse { text, model }))
    }

    pub fn put(&self, key: &str, text: &str, model: &str) -> io::Result<()> {
        write_atomic(&self.dir.join(format!("{key}.model")), model.as_bytes())?;
        write_atomic(&self.dir.join(format!("{key}.txt")), text.as_bytes())
    }
}

/// Writes via a sibling temp file and rename so readers never see a partial file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
