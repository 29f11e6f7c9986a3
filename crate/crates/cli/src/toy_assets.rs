//! Writes the built-in toy world to disk so the CLI can be tried end to end.
//!
//! Layout under the target directory:
//!
//! ```text
//! templates/<key>-<k>.pgm   one image per mixture component
//! secrets/secret-<i>.pgm    samples of the `glyphs` prior
//! prior.toml
//! config.toml
//! ```

use std::path::{Path, PathBuf};

use diffsteg::toy;
use diffsteg::ImageVector;

use crate::error::{CliError, Result};
use crate::pnm;
use crate::prior_spec::{ComponentSpec, KeySpec, PriorSpec};

pub const SECRETS: usize = 20;
pub const SECRET_SEED: u64 = 1;

const CONFIG: &str = r#"prior_spec = "prior.toml"
seed = 7
output_dir = "out"

[solver]
steps = 50

[keys]
private = "glyphs"
public = "glyphs-striped"

[bench]
corpus = "secrets"
repeats = 5
"#;

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Returns the path of the written `config.toml`.
pub fn write(dir: &Path) -> Result<PathBuf> {
    mkdir(&dir.join("templates"))?;
    mkdir(&dir.join("secrets"))?;

    let mut spec = PriorSpec::new(toy::SHAPE);
    for (name, templates) in toy::families() {
        let weight = 1.0 / templates.len() as f64;
        let mut components = Vec::new();
        for (k, t) in templates.into_iter().enumerate() {
            let rel = PathBuf::from("templates").join(format!("{name}-{k}.pgm"));
            pnm::write(&dir.join(&rel), &ImageVector::new(toy::SHAPE, t)?)?;
            components.push(ComponentSpec { weight, variance: toy::VARIANCE, image: Some(rel), mean: None });
        }
        spec.keys.insert(name.to_owned(), KeySpec::Mixture { components });
    }
    let spec_path = dir.join("prior.toml");
    std::fs::write(&spec_path, spec.to_toml()?).map_err(|e| CliError::io(&spec_path, e))?;

    let reg = toy::default_registry();
    let key = reg.key(toy::GLYPHS)?;
    for (i, s) in toy::secret_corpus(&reg, &key, SECRETS, SECRET_SEED)?.iter().enumerate() {
        pnm::write(&dir.join("secrets").join(format!("secret-{i:02}.pgm")), &s.image)?;
    }

    let config = dir.join("config.toml");
    std::fs::write(&config, CONFIG).map_err(|e| CliError::io(&config, e))?;
    Ok(config)
}
