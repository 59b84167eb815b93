/** Structured client-side failures; server denials are results, not throws. */

export class ConnectionLost extends Error {
  constructor(message = "connection closed by peer") {
    super(message);
    this.name = "ConnectionLost";
  }
}

export class ProtocolViolation extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ProtocolViolation";
  }
}
