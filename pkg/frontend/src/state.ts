/**
 * Pure view state machine for the two-screen annotation flow.
 *
 * The flow is server-driven: user actions post to the API and the server's
 * responses arrive back as `task_loaded` / `exhausted` events. The machine
 * guarantees that the categorize screen is only ever entered through a Yes
 * answer and that the done screen only follows an exhausted response.
 */

export interface TaskImage {
  id: string;
  source: string;
}

export interface CategoryOption {
  value: string;
  label: string;
}

export interface DraftComment {
  category: string | null;
  text: string;
  /** catalog key of the active validation message, if any */
  errorKey: string | null;
  /** set by a valid submit; cleared when the next task arrives */
  readyToPost: boolean;
}

export type ViewState =
  | { kind: "login"; errorKey: string | null }
  | { kind: "show_image"; image: TaskImage; prompt: string; categories: CategoryOption[] }
  | { kind: "categorize"; image: TaskImage; categories: CategoryOption[]; draft: DraftComment }
  | { kind: "done" };

export type Event =
  | { kind: "login_failed" }
  | { kind: "task_loaded"; image: TaskImage; prompt: string; categories: CategoryOption[] }
  | { kind: "exhausted" }
  | { kind: "answer_yes" }
  | { kind: "set_category"; category: string }
  | { kind: "set_text"; text: string }
  | { kind: "submit" };

export const initialState: ViewState = { kind: "login", errorKey: null };

function emptyDraft(): DraftComment {
  return { category: null, text: "", errorKey: null, readyToPost: false };
}

/** Validation for the comment form; returns the catalog key of the error. */
export function validateDraft(draft: DraftComment): string | null {
  if (draft.category === null) {
    return "categorize.error.no_category";
  }
  if (draft.text.trim() === "") {
    return "categorize.error.empty_comment";
  }
  return null;
}

export function transition(state: ViewState, event: Event): ViewState {
  switch (event.kind) {
    case "login_failed":
      return { kind: "login", errorKey: "login.failed" };

    case "task_loaded":
      // a new task always lands on the first screen, regardless of where
      // the previous judgment was made
      return {
        kind: "show_image",
        image: event.image,
        prompt: event.prompt,
        categories: event.categories,
      };

    case "exhausted":
      return { kind: "done" };

    case "answer_yes":
      if (state.kind !== "show_image") {
        return state;
      }
      return {
        kind: "categorize",
        image: state.image,
        categories: state.categories,
        draft: emptyDraft(),
      };

    case "set_category":
      if (state.kind !== "categorize") {
        return state;
      }
      // radio semantics: selecting a category replaces the previous one
      return {
        ...state,
        draft: { ...state.draft, category: event.category, errorKey: null },
      };

    case "set_text":
      if (state.kind !== "categorize") {
        return state;
      }
      return {
        ...state,
        draft: { ...state.draft, text: event.text, errorKey: null },
      };

    case "submit": {
      if (state.kind !== "categorize") {
        return state;
      }
      const errorKey = validateDraft(state.draft);
      if (errorKey !== null) {
        return {
          ...state,
          draft: { ...state.draft, errorKey, readyToPost: false },
        };
      }
      return {
        ...state,
        draft: { ...state.draft, errorKey: null, readyToPost: true },
      };
    }
  }
}
