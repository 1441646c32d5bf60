/**
 * Turns a view state into a plain screen description: every visible string
 * resolved through the catalog (or the server-localized task payload), no
 * markup. The DOM layer renders these descriptions mechanically, which
 * keeps localization testable without a browser.
 */

import { Catalog, message } from "./catalog";
import { CategoryOption, ViewState } from "./state";

export type ScreenDescription =
  | {
      screen: "login";
      title: string;
      usernameLabel: string;
      passwordLabel: string;
      submitLabel: string;
      error: string | null;
    }
  | {
      screen: "image";
      imageSource: string;
      prompt: string;
      yesLabel: string;
      noLabel: string;
    }
  | {
      screen: "categorize";
      title: string;
      imageSource: string;
      categories: CategoryOption[];
      selectedCategory: string | null;
      commentLabel: string;
      commentText: string;
      submitLabel: string;
      error: string | null;
    }
  | {
      screen: "done";
      message: string;
    };

export function renderLocalized(state: ViewState, catalog: Catalog): ScreenDescription {
  switch (state.kind) {
    case "login":
      return {
        screen: "login",
        title: message(catalog, "login.title"),
        usernameLabel: message(catalog, "login.username"),
        passwordLabel: message(catalog, "login.password"),
        submitLabel: message(catalog, "login.submit"),
        error: state.errorKey === null ? null : message(catalog, state.errorKey),
      };
    case "show_image":
      return {
        screen: "image",
        imageSource: state.image.source,
        prompt: state.prompt,
        yesLabel: message(catalog, "answer.yes"),
        noLabel: message(catalog, "answer.no"),
      };
    case "categorize":
      return {
        screen: "categorize",
        title: message(catalog, "categorize.title"),
        imageSource: state.image.source,
        categories: state.categories,
        selectedCategory: state.draft.category,
        commentLabel: message(catalog, "categorize.comment"),
        commentText: state.draft.text,
        submitLabel: message(catalog, "categorize.submit"),
        error:
          state.draft.errorKey === null
            ? null
            : message(catalog, state.draft.errorKey),
      };
    case "done":
      return {
        screen: "done",
        message: message(catalog, "done.message"),
      };
  }
}

/** All user-visible strings of a screen, for placeholder scans in tests. */
export function visibleStrings(description: ScreenDescription): string[] {
  switch (description.screen) {
    case "login":
      return [
        description.title,
        description.usernameLabel,
        description.passwordLabel,
        description.submitLabel,
        description.error ?? "",
      ];
    case "image":
      return [description.prompt, description.yesLabel, description.noLabel];
    case "categorize":
      return [
        description.title,
        description.commentLabel,
        description.submitLabel,
        description.error ?? "",
        ...description.categories.map((c) => c.label),
      ];
    case "done":
      return [description.message];
  }
}
