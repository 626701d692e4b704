//! Shared plotting setup. The font is compiled in so rendering does not
//! depend on system fonts and output bytes are stable across machines.

use std::sync::Once;

use plotters::style::FontStyle;

pub(crate) const FONT_FAMILY: &str = "sans-serif";

static FONT_BYTES: &[u8] = include_bytes!("../assets/DejaVuSans.ttf");
static REGISTER: Once = Once::new();

pub(crate) fn ensure_font() {
    REGISTER.call_once(|| {
        for style in [FontStyle::Normal, FontStyle::Bold] {
            if plotters::style::register_font(FONT_FAMILY, style, FONT_BYTES).is_err() {
                log::error!("embedded plot font failed to load");
            }
        }
    });
}
