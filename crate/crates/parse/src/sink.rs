use crate::token::Attributes;

/// Receives validated document events in document order.
///
/// Implementations must not call back into the parser that feeds them.
pub trait ContentSink {
    fn open_element(&mut self, name: &str, attrs: &Attributes);
    fn text(&mut self, text: &str);
    fn close_element(&mut self, name: &str);
}

/// Discards every event.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl ContentSink for NullSink {
    fn open_element(&mut self, _: &str, _: &Attributes) {}
    fn text(&mut self, _: &str) {}
    fn close_element(&mut self, _: &str) {}
}

/// Records events as strings, mostly useful in tests and diagnostics.
#[derive(Debug, Default, Clone)]
pub struct RecordingSink {
    pub events: Vec<String>,
}

impl ContentSink for RecordingSink {
    fn open_element(&mut self, name: &str, attrs: &Attributes) {
        let attrs: Vec<String> = attrs.iter().map(|(k, v)| format!("{k}={v}")).collect();
        self.events
            .push(format!("open {name} [{}]", attrs.join(",")));
    }

    fn text(&mut self, text: &str) {
        self.events.push(format!("text {text:?}"));
    }

    fn close_element(&mut self, name: &str) {
        self.events.push(format!("close {name}"));
    }
}

impl<S: ContentSink + ?Sized> ContentSink for &mut S {
    fn open_element(&mut self, name: &str, attrs: &Attributes) {
        (**self).open_element(name, attrs)
    }
    fn text(&mut self, text: &str) {
        (**self).text(text)
    }
    fn close_element(&mut self, name: &str) {
        (**self).close_element(name)
    }
}
