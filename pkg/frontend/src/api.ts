/**
 * Client for the annotation service JSON endpoints. The session controller
 * depends on the interface only, so tests substitute a scripted fake.
 */

import { Catalog } from "./catalog";

export interface LoginResponse {
  token: string;
  language: string;
  catalog: Catalog;
}

export interface TaskResponse {
  exhausted: boolean;
  message?: string;
  image_id?: string;
  image?: { id: string; kind: string; source: string };
  prompt?: string;
  categories?: { value: string; label: string }[];
}

export interface JudgmentPayload {
  image_id: string;
  verdict: "yes" | "no";
  comment?: { text: string; trigger: string };
}

export interface AnnotationApi {
  login(username: string, password: string): Promise<LoginResponse>;
  getTask(): Promise<TaskResponse>;
  postJudgment(payload: JudgmentPayload, idempotencyKey: string): Promise<void>;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export class HttpAnnotationApi implements AnnotationApi {
  private token: string | null = null;

  constructor(private readonly baseUrl: string = "") {}

  private async request(path: string, init: RequestInit = {}): Promise<unknown> {
    const headers: Record<string, string> = {
      "Content-Type": "application/json",
      ...(init.headers as Record<string, string> | undefined),
    };
    if (this.token !== null) {
      headers["Authorization"] = `Bearer ${this.token}`;
    }
    const response = await fetch(this.baseUrl + path, { ...init, headers });
    const body = await response.json().catch(() => ({}));
    if (!response.ok) {
      const err = body as { code?: string; message?: string };
      throw new ApiError(
        response.status,
        err.code ?? "HTTPError",
        err.message ?? response.statusText,
      );
    }
    return body;
  }

  async login(username: string, password: string): Promise<LoginResponse> {
    const body = (await this.request("/api/login", {
      method: "POST",
      body: JSON.stringify({ username, password }),
    })) as LoginResponse;
    this.token = body.token;
    return body;
  }

  async getTask(): Promise<TaskResponse> {
    return (await this.request("/api/task")) as TaskResponse;
  }

  async postJudgment(payload: JudgmentPayload, idempotencyKey: string): Promise<void> {
    await this.request("/api/judgment", {
      method: "POST",
      body: JSON.stringify(payload),
      headers: { "Idempotency-Key": idempotencyKey },
    });
  }
}
