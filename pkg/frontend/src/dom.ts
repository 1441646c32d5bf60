/**
 * Mechanical DOM rendering of screen descriptions. No strings originate
 * here; everything visible comes from the description.
 */

import { ScreenDescription } from "./render";

export interface Handlers {
  onLogin(username: string, password: string): void;
  onYes(): void;
  onNo(): void;
  onCategory(value: string): void;
  onText(text: string): void;
  onSubmit(): void;
}

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export function renderScreen(
  root: HTMLElement,
  description: ScreenDescription,
  handlers: Handlers,
): void {
  root.replaceChildren();
  switch (description.screen) {
    case "login": {
      const form = el("form", "login-form");
      form.appendChild(el("h1", "title", description.title));
      const username = document.createElement("input");
      username.placeholder = description.usernameLabel;
      username.autocapitalize = "none";
      const password = document.createElement("input");
      password.type = "password";
      password.placeholder = description.passwordLabel;
      const submit = el("button", "primary", description.submitLabel);
      form.append(username, password, submit);
      if (description.error !== null) {
        form.appendChild(el("p", "error", description.error));
      }
      form.addEventListener("submit", (e) => {
        e.preventDefault();
        handlers.onLogin(username.value, password.value);
      });
      root.appendChild(form);
      break;
    }
    case "image": {
      const img = document.createElement("img");
      img.src = description.imageSource;
      img.className = "photo";
      root.appendChild(img);
      root.appendChild(el("p", "prompt", description.prompt));
      const yes = el("button", "primary", description.yesLabel);
      yes.addEventListener("click", () => handlers.onYes());
      const no = el("button", "secondary", description.noLabel);
      no.addEventListener("click", () => handlers.onNo());
      const bar = el("div", "answer-bar");
      bar.append(no, yes);
      root.appendChild(bar);
      break;
    }
    case "categorize": {
      const img = document.createElement("img");
      img.src = description.imageSource;
      img.className = "photo small";
      root.appendChild(img);
      root.appendChild(el("h2", "title", description.title));
      const list = el("div", "categories");
      for (const category of description.categories) {
        const label = el("label", "category");
        const radio = document.createElement("input");
        radio.type = "radio";
        radio.name = "category";
        radio.value = category.value;
        radio.checked = category.value === description.selectedCategory;
        radio.addEventListener("change", () => handlers.onCategory(category.value));
        label.append(radio, document.createTextNode(category.label));
        list.appendChild(label);
      }
      root.appendChild(list);
      root.appendChild(el("p", "comment-label", description.commentLabel));
      const text = document.createElement("textarea");
      text.value = description.commentText;
      text.addEventListener("input", () => handlers.onText(text.value));
      root.appendChild(text);
      if (description.error !== null) {
        root.appendChild(el("p", "error", description.error));
      }
      const submit = el("button", "primary", description.submitLabel);
      submit.addEventListener("click", () => handlers.onSubmit());
      root.appendChild(submit);
      break;
    }
    case "done": {
      root.appendChild(el("p", "done", description.message));
      break;
    }
  }
}
