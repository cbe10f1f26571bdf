//! Browser demo: train on a synthetic graph, then explore propagation and
//! thresholds interactively. Results cross the boundary as JSON strings.
//!
//! The page lives in `www/index.html`; see the README for the build steps.

pub mod session;

use wasm_bindgen::prelude::*;

pub use session::{Session, Settings};

fn to_js<T: serde::Serialize>(value: &T) -> Result<String, JsError> {
    serde_json::to_string(value).map_err(|e| JsError::new(&e.to_string()))
}

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    session: Session,
}

#[wasm_bindgen]
impl Demo {
    /// `settings` is a JSON object; missing keys take their defaults.
    #[wasm_bindgen(constructor)]
    pub fn new(settings: &str) -> Result<Demo, JsError> {
        let settings: Settings = serde_json::from_str(settings).map_err(js_err)?;
        let session = Session::train(&settings).map_err(js_err)?;
        Ok(Demo { session })
    }

    pub fn summary(&self) -> Result<String, JsError> {
        to_js(self.session.summary())
    }

    /// Energy, raw-energy and MSP curves plus a `-E` histogram at this `γ` and `k`.
    pub fn propagate(&mut self, gamma: f64, steps: usize) -> Result<String, JsError> {
        to_js(&self.session.propagate(gamma, steps).map_err(js_err)?)
    }

    /// Detection counts and K+1 F1 scores at threshold `tau` on `-E`.
    pub fn threshold(&self, tau: f64) -> Result<String, JsError> {
        to_js(&self.session.threshold(tau).map_err(js_err)?)
    }
}

/// Defaults for the settings form.
#[wasm_bindgen]
pub fn default_settings() -> Result<String, JsError> {
    to_js(&Settings::default())
}
