import { HttpAnnotationApi } from "./api";
import { renderLocalized } from "./render";
import { renderScreen, Handlers } from "./dom";
import { AnnotationSession } from "./session";

const api = new HttpAnnotationApi("");
const session = new AnnotationSession(api);
const root = document.getElementById("app")!;

// minimal catalog so the login screen renders before any language is known;
// after login the server-provided catalog takes over
session.catalog = {
  "login.title": "Sign in",
  "login.username": "Username",
  "login.password": "Password",
  "login.submit": "Sign in",
  "login.failed": "Wrong username or password",
};

function refresh(): void {
  renderScreen(root, renderLocalized(session.state, session.catalog), handlers);
}

async function act(action: () => Promise<void> | void): Promise<void> {
  try {
    await action();
  } catch (error) {
    console.error(error);
  }
  refresh();
}

const handlers: Handlers = {
  onLogin: (username, password) => void act(() => session.login(username, password)),
  onYes: () => void act(() => session.answerYes()),
  onNo: () => void act(() => session.answerNo()),
  onCategory: (value) => void act(() => session.setCategory(value)),
  onText: (text) => void act(() => session.setText(text)),
  onSubmit: () => void act(() => session.submitComment()),
};

refresh();
