/**
 * Session controller: feeds user actions through the state machine and
 * performs the API calls the resulting states call for. One logical
 * submission carries one idempotency key, so a double-click (or a retry on
 * a flaky classroom network) can never record two judgments.
 */

import { AnnotationApi, ApiError, TaskResponse } from "./api";
import { Catalog } from "./catalog";
import { Event, ViewState, initialState, transition } from "./state";

export class AnnotationSession {
  state: ViewState = initialState;
  catalog: Catalog = {};
  language = "en";

  private submissionSeq = 0;
  private inFlight = false;

  constructor(private readonly api: AnnotationApi) {}

  private dispatch(event: Event): void {
    this.state = transition(this.state, event);
  }

  private applyTask(task: TaskResponse): void {
    if (task.exhausted) {
      this.dispatch({ kind: "exhausted" });
      return;
    }
    this.dispatch({
      kind: "task_loaded",
      image: { id: task.image!.id, source: task.image!.source },
      prompt: task.prompt ?? "",
      categories: task.categories ?? [],
    });
  }

  async login(username: string, password: string): Promise<void> {
    try {
      const response = await this.api.login(username, password);
      this.catalog = response.catalog;
      this.language = response.language;
    } catch (error) {
      if (error instanceof ApiError && error.status === 401) {
        this.dispatch({ kind: "login_failed" });
        return;
      }
      throw error;
    }
    this.applyTask(await this.api.getTask());
  }

  /** First-screen No: judge, then show the next picture. */
  async answerNo(): Promise<void> {
    if (this.state.kind !== "show_image" || this.inFlight) {
      return;
    }
    const imageId = this.state.image.id;
    this.inFlight = true;
    try {
      const key = `no-${imageId}-${++this.submissionSeq}`;
      await this.api.postJudgment({ image_id: imageId, verdict: "no" }, key);
      this.applyTask(await this.api.getTask());
    } finally {
      this.inFlight = false;
    }
  }

  /** First-screen Yes: open the category + comment screen. */
  answerYes(): void {
    this.dispatch({ kind: "answer_yes" });
  }

  setCategory(category: string): void {
    this.dispatch({ kind: "set_category", category });
  }

  setText(text: string): void {
    this.dispatch({ kind: "set_text", text });
  }

  /**
   * Second-screen submit. Client-side validation happens in the state
   * machine: an empty comment or missing category never reaches the API.
   */
  async submitComment(): Promise<void> {
    if (this.state.kind !== "categorize" || this.inFlight) {
      return;
    }
    this.dispatch({ kind: "submit" });
    if (this.state.kind !== "categorize" || !this.state.draft.readyToPost) {
      return;
    }
    const { image, draft } = this.state;
    this.inFlight = true;
    try {
      const key = `yes-${image.id}-${++this.submissionSeq}`;
      await this.api.postJudgment(
        {
          image_id: image.id,
          verdict: "yes",
          comment: { text: draft.text.trim(), trigger: draft.category! },
        },
        key,
      );
      this.applyTask(await this.api.getTask());
    } finally {
      this.inFlight = false;
    }
  }
}
