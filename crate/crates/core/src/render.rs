//! What the overlay shows for a given session state.
//!
//! Four panels on a fixed 2048x1080 virtual canvas: notifications above the
//! line of sight, the chat in it, contacts to its right and the input panel
//! below the chat.

use serde::{Deserialize, Serialize};

use crate::session::{InputFocus, Message, Notification, SessionState};

pub const CANVAS_WIDTH: u32 = 2048;
pub const CANVAS_HEIGHT: u32 = 1080;

pub const CHAT_WINDOW: usize = 3;
pub const CONTACT_WINDOW: usize = 3;
pub const NOTIFICATION_WINDOW: usize = 3;

pub const BASE_OPACITY: f64 = 0.70;
pub const BOOSTED_OPACITY: f64 = 0.95;

fn opacity(boosted: bool) -> f64 {
    if boosted {
        BOOSTED_OPACITY
    } else {
        BASE_OPACITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    TopCenter,
    MiddleCenter,
    MiddleRight,
    BottomCenter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotificationPanel {
    pub anchor: Anchor,
    pub opacity: f64,
    pub items: Vec<Notification>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatPanel {
    pub anchor: Anchor,
    pub opacity: f64,
    pub contact: Option<String>,
    pub messages: Vec<Message>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactView {
    pub name: String,
    pub unread_count: u32,
    pub boosted: bool,
    pub focused: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactPanel {
    pub anchor: Anchor,
    pub opacity: f64,
    pub items: Vec<ContactView>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    Idle,
    Dictating,
    Keyboard,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputPanel {
    pub anchor: Anchor,
    pub mode: InputMode,
    pub draft: String,
    pub focus: InputFocus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderModel {
    pub visible: bool,
    pub canvas: Canvas,
    pub notification_panel: NotificationPanel,
    pub chat_panel: ChatPanel,
    pub contact_panel: ContactPanel,
    /// Absent while the interface is hidden.
    pub input_panel: Option<InputPanel>,
}

impl RenderModel {
    fn hidden() -> Self {
        Self {
            visible: false,
            canvas: Canvas {
                width: CANVAS_WIDTH,
                height: CANVAS_HEIGHT,
            },
            notification_panel: NotificationPanel {
                anchor: Anchor::TopCenter,
                opacity: BASE_OPACITY,
                items: Vec::new(),
            },
            chat_panel: ChatPanel {
                anchor: Anchor::MiddleCenter,
                opacity: BASE_OPACITY,
                contact: None,
                messages: Vec::new(),
            },
            contact_panel: ContactPanel {
                anchor: Anchor::MiddleRight,
                opacity: BASE_OPACITY,
                items: Vec::new(),
            },
            input_panel: None,
        }
    }
}

pub fn render(state: &SessionState) -> RenderModel {
    let mut model = RenderModel::hidden();
    if !state.visible {
        return model;
    }
    model.visible = true;
    let boosted = |name: &str| state.opacity_boost.contains_key(name);

    let notes: Vec<Notification> = state
        .notifications
        .iter()
        .take(NOTIFICATION_WINDOW)
        .cloned()
        .collect();
    model.notification_panel.opacity = opacity(notes.iter().any(|n| boosted(&n.sender)));
    model.notification_panel.items = notes;

    if let Some(peer) = &state.focused_contact {
        let history = state.history.get(peer).map(Vec::as_slice).unwrap_or(&[]);
        let start = history.len().saturating_sub(CHAT_WINDOW);
        model.chat_panel.messages = history[start..].to_vec();
        model.chat_panel.opacity = opacity(boosted(peer));
        model.chat_panel.contact = Some(peer.clone());
    }

    let items: Vec<ContactView> = state
        .contacts
        .iter()
        .skip(state.scroll_offset)
        .take(CONTACT_WINDOW)
        .map(|c| ContactView {
            name: c.name.clone(),
            unread_count: c.unread_count,
            boosted: boosted(&c.name),
            focused: state.focused_contact.as_deref() == Some(c.name.as_str()),
        })
        .collect();
    model.contact_panel.opacity = opacity(items.iter().any(|c| c.boosted));
    model.contact_panel.items = items;

    model.input_panel = Some(InputPanel {
        anchor: Anchor::BottomCenter,
        mode: if state.dictating {
            InputMode::Dictating
        } else if state.keyboard_open {
            InputMode::Keyboard
        } else {
            InputMode::Idle
        },
        draft: state.draft.clone(),
        focus: state.input_focus,
    });
    model
}
